#pragma once

#include <array>
#include <cstdint>

#include "mvdet/generator.hpp"
#include "mvdet/image.hpp"

namespace mvdet {

// Band k of an image with n rows regenerates rows (m_k+1 .. m_{k+1}) from
// seed rows 1..m_k, with m_k = k*n/4: one quarter of the image per view.
struct Band {
    int k = 0;        // view index, 1..3
    int seed_rows = 0;  // m_k
    int r_start = 0;  // first generated row, 1-indexed
    int r_end = 0;    // last generated row, inclusive
};

struct BandPlan {
    int rows = 0;
    std::array<Band, 3> bands;
};

BandPlan band_plan(int rows);  // rows must be divisible by 4

struct ViewSet {
    FlatImage source;
    FlatImage g1, g2, g3, gstar;
    int label_used = 0;
    std::array<std::uint64_t, 3> rng_seeds{};  // per-view streams, recorded

    const FlatImage& view(int k) const;  // k = 1..3, 4 = gstar
};

// regenerate band k of `image` conditioned on its first m_k rows and `label`
FlatImage generate_view(GenerativeModel& model, const FlatImage& image, int label, int k, Rng& rng);

// splice: rows 1..n/4 from the source, band k from g_k
FlatImage assemble_gstar(const FlatImage& image, const FlatImage& g1, const FlatImage& g2,
                         const FlatImage& g3);

// the full multi-view procedure; view k draws from an independent stream
// derived from (master_seed, k) so parallel generation stays reproducible
ViewSet generate_views(GenerativeModel& model, const FlatImage& image, int label,
                       std::uint64_t master_seed);

}  // namespace mvdet
