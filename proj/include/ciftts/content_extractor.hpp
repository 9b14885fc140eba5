#pragma once

#include <utility>
#include <vector>

#include "ciftts/layers.hpp"
#include "ciftts/tensor.hpp"

namespace ciftts {

inline constexpr int64_t kContentDim = 128;

// Per-channel statistics captured by instance normalization.
struct InStats {
    std::vector<double> mu;     // length C
    std::vector<double> sigma;  // length C, sqrt(var + eps)
    double epsilon = 1e-5;
};

// out_cw = (F_cw - mu_c) / sqrt(var_c + eps), differentiable. f: C×W.
std::pair<Tensor, InStats> instance_norm(const Tensor& f, double eps = 1e-5);

// Content branch: strips per-channel style statistics from the
// reference mel so only linguistic structure survives.
//
// conv bank (kernels 1..8, 32 ch each) -> [conv, IN, ReLU] x2 ->
// avg pool (2,2) -> [conv, IN, ReLU] x2 -> linear to 128.
class ContentExtractor {
public:
    ContentExtractor() = default;
    ContentExtractor(ParamStore& ps, const std::string& prefix, Rng& rng);

    // x: 80×T mel (transposed), output 256×T after ReLU.
    Tensor conv_bank(const Tensor& x) const;

    // mel: T×80 log-mel, T >= 2. Output floor(T/2)×128.
    Tensor forward(const Tensor& mel, double eps = 1e-5) const;

private:
    std::vector<Conv1dLayer> bank_;
    Conv1dLayer b1c1_, b1c2_, b2c1_, b2c2_;
    Linear proj_;
};

}  // namespace ciftts
