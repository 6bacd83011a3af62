#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "multisol/rng.hpp"

namespace multisol {

/// Flat parameter storage in canonical layer order: W1 (row-major,
/// out x in), b1, W2, b2, ... Multi-head and standalone networks
/// interconvert by slicing this layout.
using ParamVector = std::vector<double>;

/// Fully-connected tanh network: tanh on hidden layers, identity output.
struct NetworkSpec {
    std::vector<int> layer_widths;

    NetworkSpec() = default;
    explicit NetworkSpec(std::vector<int> widths) : layer_widths(std::move(widths)) {
        validate();
    }

    void validate() const {
        if (layer_widths.size() < 3)
            throw std::invalid_argument("NetworkSpec: need at least one hidden layer");
        for (int w : layer_widths)
            if (w <= 0) throw std::invalid_argument("NetworkSpec: layer widths must be positive");
        if (layer_widths.front() != 1 && layer_widths.front() != 2)
            throw std::invalid_argument("NetworkSpec: input dimension must be 1 or 2");
    }

    int input_dim() const { return layer_widths.front(); }
    int output_dim() const { return layer_widths.back(); }
    std::size_t n_layers() const { return layer_widths.size() - 1; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l)
            n += static_cast<std::size_t>(layer_widths[l]) * layer_widths[l + 1] + layer_widths[l + 1];
        return n;
    }

    /// Offset of layer l's weight block; biases follow the weights.
    std::size_t weight_offset(std::size_t l) const {
        std::size_t off = 0;
        for (std::size_t k = 0; k < l; ++k)
            off += static_cast<std::size_t>(layer_widths[k]) * layer_widths[k + 1] + layer_widths[k + 1];
        return off;
    }
    std::size_t bias_offset(std::size_t l) const {
        return weight_offset(l) + static_cast<std::size_t>(layer_widths[l]) * layer_widths[l + 1];
    }

    bool operator==(const NetworkSpec&) const = default;
};

/// i.i.d. initialization scheme applied to every weight and bias.
struct InitScheme {
    enum class Kind { Normal, Uniform, TruncatedNormal };
    Kind kind = Kind::Normal;
    double sigma = 1.0; // Normal / TruncatedNormal std deviation
    double bound = 1.0; // Uniform half-width B, draws in [-B, B)
    double mu = 0.0;    // TruncatedNormal mean

    static InitScheme normal(double sigma) {
        if (sigma <= 0.0) throw std::invalid_argument("InitScheme: sigma must be positive");
        return {Kind::Normal, sigma, 0.0, 0.0};
    }
    static InitScheme uniform(double bound) {
        if (bound <= 0.0) throw std::invalid_argument("InitScheme: bound must be positive");
        return {Kind::Uniform, 0.0, bound, 0.0};
    }
    static InitScheme truncated_normal(double mu, double sigma) {
        if (sigma <= 0.0) throw std::invalid_argument("InitScheme: sigma must be positive");
        return {Kind::TruncatedNormal, sigma, 0.0, mu};
    }

    double draw(Rng& rng) const {
        switch (kind) {
            case Kind::Normal: return rng.normal(sigma);
            case Kind::Uniform: return rng.uniform_sym(bound);
            case Kind::TruncatedNormal: return rng.truncated_normal(mu, sigma);
        }
        return 0.0;
    }
};

/// Draw every weight and bias i.i.d. from the scheme. Pure function of
/// (spec, scheme, seed).
inline ParamVector init_params(const NetworkSpec& spec, const InitScheme& scheme,
                               std::uint64_t seed) {
    Rng rng(seed);
    ParamVector p(spec.param_count());
    for (double& v : p) v = scheme.draw(rng);
    return p;
}

/// Shared body feeding n_heads independent head sub-networks. Parameter
/// layout: [body layers..., head 0 layers..., head 1 layers..., ...].
struct MultiHeadSpec {
    std::vector<int> body_widths; // includes input width; last = body output width
    std::vector<int> head_widths; // first = body output width; last = head output
    int n_heads = 1;

    MultiHeadSpec() = default;
    MultiHeadSpec(std::vector<int> body, std::vector<int> head, int heads)
        : body_widths(std::move(body)), head_widths(std::move(head)), n_heads(heads) {
        validate();
    }

    void validate() const {
        if (body_widths.size() < 2 || head_widths.size() < 2)
            throw std::invalid_argument("MultiHeadSpec: body and head need at least one layer");
        if (body_widths.back() != head_widths.front())
            throw std::invalid_argument("MultiHeadSpec: body output width must equal head input width");
        if (n_heads < 1) throw std::invalid_argument("MultiHeadSpec: n_heads must be positive");
    }

    /// Standalone network equivalent to one body+head chain.
    NetworkSpec standalone_spec() const {
        std::vector<int> widths(body_widths);
        widths.insert(widths.end(), head_widths.begin() + 1, head_widths.end());
        return NetworkSpec(std::move(widths));
    }

    std::size_t body_param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < body_widths.size(); ++l)
            n += static_cast<std::size_t>(body_widths[l]) * body_widths[l + 1] + body_widths[l + 1];
        return n;
    }
    std::size_t head_param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l + 1 < head_widths.size(); ++l)
            n += static_cast<std::size_t>(head_widths[l]) * head_widths[l + 1] + head_widths[l + 1];
        return n;
    }
    std::size_t param_count() const {
        return body_param_count() + static_cast<std::size_t>(n_heads) * head_param_count();
    }

    /// Canonical standalone ParamVector for one head: body params followed
    /// by that head's params.
    ParamVector assemble_standalone(const ParamVector& mh_params, int head) const {
        if (head < 0 || head >= n_heads)
            throw std::out_of_range("MultiHeadSpec: head index out of range");
        if (mh_params.size() != param_count())
            throw std::invalid_argument("MultiHeadSpec: parameter vector size mismatch");
        std::size_t nb = body_param_count();
        std::size_t nh = head_param_count();
        ParamVector out(nb + nh);
        std::copy(mh_params.begin(), mh_params.begin() + nb, out.begin());
        auto head_begin = mh_params.begin() + nb + static_cast<std::ptrdiff_t>(head) * nh;
        std::copy(head_begin, head_begin + nh, out.begin() + nb);
        return out;
    }
};

/// Draw body then each head in order from a single stream.
inline ParamVector init_params(const MultiHeadSpec& spec, const InitScheme& scheme,
                               std::uint64_t seed) {
    Rng rng(seed);
    ParamVector p(spec.param_count());
    for (double& v : p) v = scheme.draw(rng);
    return p;
}

} // namespace multisol
