#include "mvdet/views.hpp"

namespace mvdet {

BandPlan band_plan(int rows) {
    check(rows > 0 && rows % 4 == 0,
          "band_plan: rows must be positive and divisible by 4, got " + std::to_string(rows));
    BandPlan plan;
    plan.rows = rows;
    const int q = rows / 4;
    for (int k = 1; k <= 3; ++k) {
        Band b;
        b.k = k;
        b.seed_rows = k * q;        // m_k
        b.r_start = k * q + 1;      // m_k + 1
        b.r_end = (k + 1) * q;      // m_{k+1}
        plan.bands[k - 1] = b;
    }
    return plan;
}

const FlatImage& ViewSet::view(int k) const {
    switch (k) {
        case 1: return g1;
        case 2: return g2;
        case 3: return g3;
        case 4: return gstar;
    }
    check(false, "ViewSet::view: k must be 1..4");
    return gstar;
}

FlatImage generate_view(GenerativeModel& model, const FlatImage& image, int label, int k, Rng& rng) {
    check(k >= 1 && k <= 3, "generate_view: k must be 1..3");
    const BandPlan plan = band_plan(image.rows);
    const Band& b = plan.bands[k - 1];
    return generate_rows(model, image, label, b.r_start, b.r_end, rng);
}

FlatImage assemble_gstar(const FlatImage& image, const FlatImage& g1, const FlatImage& g2,
                         const FlatImage& g3) {
    check(image.same_shape(g1) && image.same_shape(g2) && image.same_shape(g3),
          "assemble_gstar: shape mismatch");
    const BandPlan plan = band_plan(image.rows);
    const int stride = image.cols * image.channels;
    FlatImage out = image;  // rows 1..n/4 stay from the source
    const FlatImage* views[3] = {&g1, &g2, &g3};
    for (int k = 0; k < 3; ++k) {
        const Band& b = plan.bands[k];
        const std::size_t off = static_cast<std::size_t>(b.r_start - 1) * stride;
        const std::size_t len = static_cast<std::size_t>(b.r_end - b.r_start + 1) * stride;
        std::copy(views[k]->pixels.begin() + off, views[k]->pixels.begin() + off + len,
                  out.pixels.begin() + off);
    }
    return out;
}

ViewSet generate_views(GenerativeModel& model, const FlatImage& image, int label,
                       std::uint64_t master_seed) {
    ViewSet vs;
    vs.source = image;
    vs.label_used = label;
    FlatImage* outs[3] = {&vs.g1, &vs.g2, &vs.g3};
    for (int k = 1; k <= 3; ++k) {
        vs.rng_seeds[k - 1] = derive_seed(master_seed, static_cast<std::uint64_t>(k));
        Rng rng(vs.rng_seeds[k - 1]);
        *outs[k - 1] = generate_view(model, image, label, k, rng);
    }
    vs.gstar = assemble_gstar(image, vs.g1, vs.g2, vs.g3);
    return vs;
}

}  // namespace mvdet
