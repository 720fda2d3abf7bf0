#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>

#include "w2vbert/rng.hpp"
#include "w2vbert/tensor.hpp"

namespace w2v {

// Named trainable parameters. Creation order does not matter: iteration is
// name-sorted, and every tensor is initialized from hash(seed, name) so the
// same config always yields the same weights.
template <typename T>
class ParamStore {
  public:
    explicit ParamStore(uint64_t seed = 0) : seed_(seed) {}

    // Xavier-style init scaled by fan-in.
    Tensor<T> get_matrix(const std::string& name, int rows, int cols) {
        return get(name, Shape{rows, cols}, std::sqrt(1.0 / std::max(rows, 1)));
    }

    Tensor<T> get_vector(const std::string& name, int len, T fill) {
        auto it = params_.find(name);
        if (it != params_.end()) return check_shape(name, it->second, Shape{len});
        Tensor<T> t = Tensor<T>::full(Shape{len}, fill, true);
        params_.emplace(name, t);
        return t;
    }

    Tensor<T> get(const std::string& name, Shape shape, double stddev) {
        auto it = params_.find(name);
        if (it != params_.end()) return check_shape(name, it->second, shape);
        Rng rng{seed_, hash_name(name)};
        std::vector<T> d((size_t)numel(shape));
        for (auto& v : d) v = (T)(stddev * rng.normal());
        Tensor<T> t(shape, std::move(d), true);
        params_.emplace(name, t);
        return t;
    }

    bool contains(const std::string& name) const { return params_.count(name) > 0; }
    std::map<std::string, Tensor<T>>& all() { return params_; }
    const std::map<std::string, Tensor<T>>& all() const { return params_; }
    uint64_t seed() const { return seed_; }

    void clear_grads() {
        for (auto& [name, p] : params_) p.clear_grad();
    }

    int64_t n_values() const {
        int64_t n = 0;
        for (const auto& [name, p] : params_) n += p.size();
        return n;
    }

  private:
    static uint64_t hash_name(const std::string& name) {
        uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : name) h = splitmix64(h ^ (uint64_t)(unsigned char)c);
        return h;
    }
    static Tensor<T> check_shape(const std::string& name, const Tensor<T>& t, const Shape& shape) {
        if (t.shape() != shape)
            tensor_fail("ParamStore", "parameter '" + name + "' exists with shape " +
                                          shape_str(t.shape()) + ", requested " + shape_str(shape));
        return t;
    }

    uint64_t seed_;
    std::map<std::string, Tensor<T>> params_;
};

} // namespace w2v
