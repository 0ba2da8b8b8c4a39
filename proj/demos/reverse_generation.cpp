// Generation cost: reverse-time sampling from an rEFH needs one downward
// pass per layer and step, forward sampling a Gibbs chain per step.

#include <cstdio>

#include "refh/refh.hpp"

int main() {
    using namespace refh;
    Rng rng(5);
    const HarmoniumParams p = HarmoniumParams::recurrent(LayerSpec::uniform(UnitFamily::Bernoulli, 900), 400, rng, 0.05);

    const Matrix seed = sample_layer(p.hid_spec, Matrix::Constant(400, 1, 0.5), rng);
    const auto rev = generate_reverse_refh(p, 100, seed.col(0), rng);
    const auto fwd = generate_forward_gibbs(p, 100, 50, rng);

    std::printf("reverse: %zu layer passes for 100 frames\n", rev.passes.total());
    std::printf("forward: %zu layer passes for 100 frames (50 Gibbs steps each)\n", fwd.passes.total());
}
