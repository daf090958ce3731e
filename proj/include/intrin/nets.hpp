#pragma once
#include "intrin/graph.hpp"
#include "intrin/rng.hpp"
#include <string>
#include <vector>

namespace intrin {

// Fully-connected layer, x [N,in] -> [N,out]. Weights w [out,in], bias b [1,out].
struct Linear {
    Param w, b;

    Linear() = default;
    // Sine-network init: uniform in [-sqrt(6/fan_in)/w0, +sqrt(6/fan_in)/w0]
    Linear(const std::string& name, int64_t in, int64_t out, Rng& rng, double w0);

    Var operator()(Tape& t, Var x);
    void collect(std::vector<Param*>& out);
};

// MLP with sin(w0 * pre-activation) on every layer except the linear output.
// depth counts hidden sine layers; w0 is 30 on the first layer, 1 afterwards.
struct SirenMlp {
    std::vector<Linear> layers;
    std::vector<double> omega; // per hidden layer

    static SirenMlp make(const std::string& name, int64_t in, int64_t width, int64_t out, int depth,
                         Rng& rng, double w0_first = 30.0, double w0_hidden = 1.0);
    Var operator()(Tape& t, Var x);
    void collect(std::vector<Param*>& out);
};

// Convolution layer for the discriminators, x [B,C,H,W]. He-uniform init
// (the sqrt(6/fan_in) bound matches leaky-relu gain 0.2 to within 2%).
struct Conv2dLayer {
    Param w, b;
    int stride = 1, pad = 1;

    Conv2dLayer() = default;
    Conv2dLayer(const std::string& name, int64_t in_ch, int64_t out_ch, int64_t k, int stride, int pad,
                Rng& rng);

    Var operator()(Tape& t, Var x);
    void collect(std::vector<Param*>& out);
};

// Adam with bias correction. Gradients live in Param::grad; callers zero them
// between steps and are responsible for skipping steps on non-finite grads.
struct Adam {
    struct Slot {
        Param* p;
        Tensor m, v;
    };
    std::vector<Slot> slots;
    double beta1, beta2, eps;
    int64_t t = 0;

    Adam() = default;
    Adam(const std::vector<Param*>& ps, double beta1, double beta2, double eps = 1e-8);
    void step(double lr);
    void zero_grad();
    bool grads_finite() const;
};

} // namespace intrin
