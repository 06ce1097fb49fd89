#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cce/error.hpp"
#include "cce/random.hpp"

namespace cce::nn {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << ']';
    return os.str();
}

inline std::size_t shape_size(const Shape& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

// Dense row-major tensor of rank 1 or 2. Scalars are rank 1 with one element.
template <class T>
struct Tensor {
    Shape shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(shape_size(shape), fill) {}
    Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
        if (data.size() != shape_size(shape))
            throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                             shape_str(shape));
    }

    static Tensor vector(std::vector<T> values) {
        const std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }
    static Tensor scalar(T v) { return Tensor({1}, std::vector<T>{v}); }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    bool empty() const { return data.empty(); }
    std::size_t rows() const { return shape.at(0); }
    std::size_t cols() const { return shape.size() > 1 ? shape[1] : 1; }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }
    T& at(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    const T& at(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <class To, class From>
Tensor<To> cast(const Tensor<From>& t) {
    Tensor<To> out(t.shape);
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = static_cast<To>(t[i]);
    return out;
}

// Which part of the network a parameter belongs to. Fine-tuning freezes the
// encoders and swaps decoder/output head, so every tensor carries a tag.
enum class Component : std::uint8_t { CodeEncoder = 0, EditEncoder = 1, Decoder = 2, OutputHead = 3 };

inline const char* component_name(Component c) {
    switch (c) {
        case Component::CodeEncoder: return "code-encoder";
        case Component::EditEncoder: return "edit-encoder";
        case Component::Decoder: return "decoder";
        case Component::OutputHead: return "output-head";
    }
    return "?";
}

inline bool is_encoder(Component c) { return c == Component::CodeEncoder || c == Component::EditEncoder; }

template <class T>
struct Parameter {
    std::string name;
    Component component;
    Tensor<T> value;

    friend bool operator==(const Parameter&, const Parameter&) = default;
};

template <class T>
class ParameterSet {
public:
    // Uniform in [-k, k] with k = 1/sqrt(fan_in); fan-in is the column count
    // (or the length, for vectors).
    std::size_t add(std::string name, Component component, Shape shape, Rng& rng, std::size_t fan_in = 0) {
        Tensor<T> value(shape);
        if (fan_in == 0) fan_in = shape.size() > 1 ? shape[1] : shape[0];
        const double k = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (auto& v : value.data) v = static_cast<T>(rng.uniform(-k, k));
        return add(std::move(name), component, std::move(value));
    }

    std::size_t add(std::string name, Component component, Tensor<T> value) {
        if (index_.contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
        index_.emplace(name, params_.size());
        params_.push_back({std::move(name), component, std::move(value)});
        return params_.size() - 1;
    }

    std::size_t size() const { return params_.size(); }
    Parameter<T>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw UsageError("no parameter named '" + name + "'");
        return it->second;
    }

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.size();
        return n;
    }

    friend bool operator==(const ParameterSet& a, const ParameterSet& b) { return a.params_ == b.params_; }

private:
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Gradients aligned index-for-index with a ParameterSet.
template <class T>
struct Gradients {
    std::vector<Tensor<T>> tensors;

    explicit Gradients(const ParameterSet<T>& params) {
        tensors.reserve(params.size());
        for (const auto& p : params) tensors.emplace_back(p.value.shape);
    }

    void zero() {
        for (auto& t : tensors) std::fill(t.data.begin(), t.data.end(), T(0));
    }

    void scale(T s) {
        for (auto& t : tensors)
            for (auto& v : t.data) v *= s;
    }

    double norm() const {
        double sq = 0;
        for (const auto& t : tensors)
            for (auto v : t.data) sq += static_cast<double>(v) * static_cast<double>(v);
        return std::sqrt(sq);
    }
};

struct Var {
    std::uint32_t id = UINT32_MAX;
};

// Records a computation and differentiates it in reverse recording order.
// Parameters enter as leaves; their gradients stay on the tape until
// accumulate() copies them out, so the ParameterSet itself is never mutated.
template <class T>
class Tape {
public:
    explicit Tape(const ParameterSet<T>* params = nullptr, bool requires_grad = true)
        : params_(params), requires_grad_(requires_grad) {}

    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    const Tensor<T>& value(Var v) const {
        const Node& n = nodes_[v.id];
        return n.ref ? *n.ref : n.value;
    }

    T scalar(Var v) const { return value(v)[0]; }

    Tensor<T>& grad(Var v) {
        Node& n = nodes_[v.id];
        if (n.grad.empty()) n.grad = Tensor<T>(value(v).shape);
        return n.grad;
    }

    std::size_t size() const { return nodes_.size(); }

    Var constant(Tensor<T> t) { return push(std::move(t), {}); }

    Var param(std::size_t index) {
        if (!params_) throw UsageError("tape has no parameter set");
        if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return it->second;
        Node n;
        n.ref = &(*params_)[index].value;
        n.param_index = index;
        nodes_.push_back(std::move(n));
        Var v{static_cast<std::uint32_t>(nodes_.size() - 1)};
        param_nodes_.emplace(index, v);
        return v;
    }

    // Seeds d(loss)/d(loss) = 1 and runs every backward closure in reverse.
    void backward(Var loss) {
        if (!requires_grad_) throw UsageError("backward on a tape recorded without gradients");
        if (value(loss).size() != 1)
            throw ShapeError("backward needs a scalar loss, got shape " + shape_str(value(loss).shape));
        grad(loss)[0] = T(1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Node& n = nodes_[i];
            if (n.backward && !n.grad.empty()) n.backward(*this, Var{static_cast<std::uint32_t>(i)});
        }
    }

    // Adds this tape's parameter gradients into `out`.
    void accumulate(Gradients<T>& out) const {
        for (const auto& [index, v] : param_nodes_) {
            const Node& n = nodes_[v.id];
            if (n.grad.empty()) continue;
            auto& dst = out.tensors[index].data;
            for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad.data[k];
        }
    }

    // -----------------------------------------------------------------------
    // Operations

    Var matmul(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        if (A.rank() != 2 || B.shape[0] != A.shape[1] || B.rank() > 2)
            throw ShapeError("matmul: incompatible shapes " + shape_str(A.shape) + " and " + shape_str(B.shape));
        const std::size_t m = A.shape[0], k = A.shape[1];
        if (B.rank() == 1) {
            Tensor<T> out({m});
            for (std::size_t r = 0; r < m; ++r) {
                const T* row = &A.data[r * k];
                T acc = 0;
                for (std::size_t c = 0; c < k; ++c) acc += row[c] * B.data[c];
                out.data[r] = acc;
            }
            return push(std::move(out), [a, b, m, k](Tape& t, Var self) {
                const auto& g = t.grad(self).data;
                const auto& A = t.value(a).data;
                const auto& B = t.value(b).data;
                auto& gA = t.grad(a).data;
                for (std::size_t r = 0; r < m; ++r) {
                    if (g[r] == T(0)) continue;
                    T* dst = &gA[r * k];
                    for (std::size_t c = 0; c < k; ++c) dst[c] += g[r] * B[c];
                }
                auto& gB = t.grad(b).data;
                for (std::size_t r = 0; r < m; ++r) {
                    const T* row = &A[r * k];
                    for (std::size_t c = 0; c < k; ++c) gB[c] += row[c] * g[r];
                }
            });
        }
        const std::size_t n = B.shape[1];
        Tensor<T> out({m, n});
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t p = 0; p < k; ++p) {
                const T av = A.data[r * k + p];
                for (std::size_t c = 0; c < n; ++c) out.data[r * n + c] += av * B.data[p * n + c];
            }
        return push(std::move(out), [a, b, m, k, n](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            const auto& A = t.value(a).data;
            const auto& B = t.value(b).data;
            auto& gA = t.grad(a).data;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t p = 0; p < k; ++p) {
                    T acc = 0;
                    for (std::size_t c = 0; c < n; ++c) acc += g[r * n + c] * B[p * n + c];
                    gA[r * k + p] += acc;
                }
            auto& gB = t.grad(b).data;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t p = 0; p < k; ++p) {
                    const T av = A[r * k + p];
                    for (std::size_t c = 0; c < n; ++c) gB[p * n + c] += av * g[r * n + c];
                }
        });
    }

    Var transpose(Var a) {
        const auto& A = value(a);
        if (A.rank() != 2) throw ShapeError("transpose: expected a matrix, got " + shape_str(A.shape));
        const std::size_t m = A.shape[0], n = A.shape[1];
        Tensor<T> out({n, m});
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) out.data[c * m + r] = A.data[r * n + c];
        return push(std::move(out), [a, m, n](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(a).data;
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < n; ++c) gA[r * n + c] += g[c * m + r];
        });
    }

    Var add(Var a, Var b) { return binary("add", a, b, [](T x, T y) { return x + y; }, T(1), T(1)); }
    Var sub(Var a, Var b) { return binary("sub", a, b, [](T x, T y) { return x - y; }, T(1), T(-1)); }

    Var mul(Var a, Var b) {
        const auto& A = value(a);
        const auto& B = value(b);
        require_same("mul", A, B);
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = A.data[i] * B.data[i];
        return push(std::move(out), [a, b](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            const auto& A = t.value(a).data;
            const auto& B = t.value(b).data;
            {
                auto& gA = t.grad(a).data;
                for (std::size_t i = 0; i < g.size(); ++i) gA[i] += g[i] * B[i];
            }
            auto& gB = t.grad(b).data;
            for (std::size_t i = 0; i < g.size(); ++i) gB[i] += g[i] * A[i];
        });
    }

    // alpha * a + beta, elementwise.
    Var affine(Var a, T alpha, T beta) {
        const auto& A = value(a);
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = alpha * A.data[i] + beta;
        return push(std::move(out), [a, alpha](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(a).data;
            for (std::size_t i = 0; i < g.size(); ++i) gA[i] += alpha * g[i];
        });
    }

    Var scale(Var a, T s) { return affine(a, s, T(0)); }

    Var sigmoid(Var a) {
        const auto& A = value(a);
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = sigmoid_value(A.data[i]);
        return push(std::move(out), [a](Tape& t, Var self) {
            const auto& y = t.value(self).data;
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(a).data;
            for (std::size_t i = 0; i < g.size(); ++i) gA[i] += g[i] * y[i] * (T(1) - y[i]);
        });
    }

    Var tanh(Var a) {
        const auto& A = value(a);
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = std::tanh(A.data[i]);
        return push(std::move(out), [a](Tape& t, Var self) {
            const auto& y = t.value(self).data;
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(a).data;
            for (std::size_t i = 0; i < g.size(); ++i) gA[i] += g[i] * (T(1) - y[i] * y[i]);
        });
    }

    Var log(Var a) {
        const auto& A = value(a);
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = std::log(A.data[i]);
        return push(std::move(out), [a](Tape& t, Var self) {
            const auto& x = t.value(a).data;
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(a).data;
            for (std::size_t i = 0; i < g.size(); ++i) gA[i] += g[i] / x[i];
        });
    }

    // Softmax over a vector.
    Var softmax(Var a) {
        const auto& A = value(a);
        if (A.rank() != 1) throw ShapeError("softmax: expected a vector, got " + shape_str(A.shape));
        Tensor<T> out(A.shape);
        softmax_into(A.data, out.data);
        return push(std::move(out), [a](Tape& t, Var self) {
            const auto& y = t.value(self).data;
            const auto& g = t.grad(self).data;
            T dot = 0;
            for (std::size_t i = 0; i < y.size(); ++i) dot += g[i] * y[i];
            auto& gA = t.grad(a).data;
            for (std::size_t i = 0; i < y.size(); ++i) gA[i] += y[i] * (g[i] - dot);
        });
    }

    // -log softmax(logits)[target].
    Var cross_entropy(Var logits, std::size_t target) {
        const auto& L = value(logits);
        if (L.rank() != 1 || target >= L.size())
            throw ShapeError("cross_entropy: target " + std::to_string(target) + " outside logits of shape " +
                             shape_str(L.shape));
        std::vector<T> probs(L.size());
        softmax_into(L.data, probs);
        const T m = *std::max_element(L.data.begin(), L.data.end());
        T z = 0;
        for (auto v : L.data) z += std::exp(v - m);
        const T loss = m + std::log(z) - L.data[target];
        return push(Tensor<T>::scalar(loss), [logits, target, probs = std::move(probs)](Tape& t, Var self) {
            const T g = t.grad(self)[0];
            auto& gL = t.grad(logits).data;
            for (std::size_t i = 0; i < probs.size(); ++i) gL[i] += g * (probs[i] - (i == target ? T(1) : T(0)));
        });
    }

    Var concat(const std::vector<Var>& parts) {
        std::size_t total = 0;
        for (auto p : parts) {
            if (value(p).rank() != 1) throw ShapeError("concat: expected vectors, got " + shape_str(value(p).shape));
            total += value(p).size();
        }
        Tensor<T> out({total});
        std::size_t off = 0;
        for (auto p : parts) {
            const auto& v = value(p).data;
            std::copy(v.begin(), v.end(), out.data.begin() + static_cast<std::ptrdiff_t>(off));
            off += v.size();
        }
        return push(std::move(out), [parts](Tape& t, Var self) {
            std::size_t off = 0;
            for (auto p : parts) {
                const std::size_t n = t.value(p).size();
                const auto& g = t.grad(self).data;
                auto& gp = t.grad(p).data;
                for (std::size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                off += n;
            }
        });
    }

    Var slice(Var a, std::size_t offset, std::size_t length) {
        const auto& A = value(a);
        if (A.rank() != 1 || offset + length > A.size())
            throw ShapeError("slice: [" + std::to_string(offset) + ", " + std::to_string(offset + length) +
                             ") outside " + shape_str(A.shape));
        Tensor<T> out({length});
        std::copy_n(A.data.begin() + static_cast<std::ptrdiff_t>(offset), length, out.data.begin());
        return push(std::move(out), [a, offset](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(a).data;
            for (std::size_t i = 0; i < g.size(); ++i) gA[offset + i] += g[i];
        });
    }

    // Stacks equal-length vectors as the rows of a matrix.
    Var stack(const std::vector<Var>& rows) {
        if (rows.empty()) throw ShapeError("stack: no rows");
        const std::size_t n = value(rows[0]).size();
        for (auto r : rows)
            if (value(r).rank() != 1 || value(r).size() != n)
                throw ShapeError("stack: row shape " + shape_str(value(r).shape) + " differs from [" +
                                 std::to_string(n) + "]");
        Tensor<T> out({rows.size(), n});
        for (std::size_t i = 0; i < rows.size(); ++i)
            std::copy_n(value(rows[i]).data.begin(), n, out.data.begin() + static_cast<std::ptrdiff_t>(i * n));
        return push(std::move(out), [rows, n](Tape& t, Var self) {
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto& g = t.grad(self).data;
                auto& gr = t.grad(rows[i]).data;
                for (std::size_t c = 0; c < n; ++c) gr[c] += g[i * n + c];
            }
        });
    }

    // Row `index` of a matrix (an embedding lookup when the matrix is a table).
    Var embedding(Var table, std::size_t index) {
        const auto& A = value(table);
        if (A.rank() != 2 || index >= A.shape[0])
            throw ShapeError("embedding: row " + std::to_string(index) + " outside table " + shape_str(A.shape));
        const std::size_t n = A.shape[1];
        Tensor<T> out({n});
        std::copy_n(A.data.begin() + static_cast<std::ptrdiff_t>(index * n), n, out.data.begin());
        return push(std::move(out), [table, index, n](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            auto& gA = t.grad(table).data;
            for (std::size_t c = 0; c < n; ++c) gA[index * n + c] += g[c];
        });
    }

    Var pick(Var a, std::size_t index) { return gather_sum(a, {index}); }

    // Sum of the selected entries (a scalar); an empty selection gives 0.
    Var gather_sum(Var a, std::vector<std::size_t> indices) {
        const auto& A = value(a);
        T acc = 0;
        for (auto i : indices) {
            if (i >= A.size())
                throw ShapeError("gather: index " + std::to_string(i) + " outside " + shape_str(A.shape));
            acc += A.data[i];
        }
        return push(Tensor<T>::scalar(acc), [a, indices = std::move(indices)](Tape& t, Var self) {
            const T g = t.grad(self)[0];
            auto& gA = t.grad(a).data;
            for (auto i : indices) gA[i] += g;
        });
    }

    Var sum(Var a) {
        const auto& A = value(a);
        T acc = 0;
        for (auto v : A.data) acc += v;
        return push(Tensor<T>::scalar(acc), [a](Tape& t, Var self) {
            const T g = t.grad(self)[0];
            for (auto& v : t.grad(a).data) v += g;
        });
    }

    // Mean of scalars.
    Var mean(const std::vector<Var>& scalars) {
        if (scalars.empty()) throw ShapeError("mean: no inputs");
        T acc = 0;
        for (auto s : scalars) {
            if (value(s).size() != 1) throw ShapeError("mean: expected scalars, got " + shape_str(value(s).shape));
            acc += value(s)[0];
        }
        const T inv = T(1) / static_cast<T>(scalars.size());
        return push(Tensor<T>::scalar(acc * inv), [scalars, inv](Tape& t, Var self) {
            const T g = t.grad(self)[0] * inv;
            for (auto s : scalars) t.grad(s)[0] += g;
        });
    }

    static T sigmoid_value(T x) {
        if (x >= 0) return T(1) / (T(1) + std::exp(-x));
        const T e = std::exp(x);
        return e / (T(1) + e);
    }

    static void softmax_into(const std::vector<T>& in, std::vector<T>& out) {
        const T m = *std::max_element(in.begin(), in.end());
        T z = 0;
        for (std::size_t i = 0; i < in.size(); ++i) z += (out[i] = std::exp(in[i] - m));
        for (auto& v : out) v /= z;
    }

private:
    using Backward = std::function<void(Tape&, Var)>;

    struct Node {
        Tensor<T> value;
        const Tensor<T>* ref = nullptr;
        Tensor<T> grad;
        Backward backward;
        std::size_t param_index = SIZE_MAX;
    };

    Var push(Tensor<T> value, Backward backward) {
        for (auto v : value.data)
            if (!std::isfinite(v)) throw Error("non-finite value produced on tape (node " + std::to_string(nodes_.size()) + ")");
        Node n;
        n.value = std::move(value);
        if (requires_grad_) n.backward = std::move(backward);
        nodes_.push_back(std::move(n));
        return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
    }

    static void require_same(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
        if (a.shape != b.shape)
            throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }

    template <class F>
    Var binary(const char* op, Var a, Var b, F f, T da, T db) {
        const auto& A = value(a);
        const auto& B = value(b);
        require_same(op, A, B);
        Tensor<T> out(A.shape);
        for (std::size_t i = 0; i < A.size(); ++i) out.data[i] = f(A.data[i], B.data[i]);
        return push(std::move(out), [a, b, da, db](Tape& t, Var self) {
            const auto& g = t.grad(self).data;
            {
                auto& gA = t.grad(a).data;
                for (std::size_t i = 0; i < g.size(); ++i) gA[i] += da * g[i];
            }
            auto& gB = t.grad(b).data;
            for (std::size_t i = 0; i < g.size(); ++i) gB[i] += db * g[i];
        });
    }

    const ParameterSet<T>* params_;
    bool requires_grad_;
    std::vector<Node> nodes_;
    std::unordered_map<std::size_t, Var> param_nodes_;
};

// Gated recurrent cell: gates (input, forget, candidate, output) from one
// affine map of [input; hidden].
template <class T>
struct CellState {
    Var hidden;
    Var cell;
};

template <class T>
CellState<T> recurrent_cell_step(Tape<T>& tape, CellState<T> state, Var input, Var weight, Var bias) {
    const std::size_t h = tape.value(state.hidden).size();
    const auto& W = tape.value(weight);
    const std::size_t in = tape.value(input).size();
    if (W.rank() != 2 || W.shape[0] != 4 * h || W.shape[1] != in + h || tape.value(bias).size() != 4 * h)
        throw ShapeError("recurrent_cell_step: weight " + shape_str(W.shape) + " does not fit input " +
                         std::to_string(in) + " and hidden " + std::to_string(h));
    const Var z = tape.add(tape.matmul(weight, tape.concat({input, state.hidden})), bias);
    const Var i = tape.sigmoid(tape.slice(z, 0, h));
    const Var f = tape.sigmoid(tape.slice(z, h, h));
    const Var g = tape.tanh(tape.slice(z, 2 * h, h));
    const Var o = tape.sigmoid(tape.slice(z, 3 * h, h));
    const Var c = tape.add(tape.mul(f, state.cell), tape.mul(i, g));
    const Var hidden = tape.mul(o, tape.tanh(c));
    return {hidden, c};
}

// Central-difference check of every parameter entry of a scalar computation.
// Returns max |analytic - numeric| / max(|analytic|, |numeric|, 1e-6); the
// floor covers entries too small for a finite difference to resolve.
template <class T, class Fn>
double grad_check(ParameterSet<T>& params, Fn&& fn, double eps = 1e-5) {
    Gradients<T> analytic(params);
    {
        Tape<T> tape(&params);
        const Var out = fn(tape);
        if (tape.value(out).size() != 1)
            throw ShapeError("grad_check: computation is not scalar-valued (shape " +
                             shape_str(tape.value(out).shape) + ")");
        tape.backward(out);
        tape.accumulate(analytic);
    }
    auto evaluate = [&] {
        Tape<T> tape(&params, false);
        return static_cast<double>(tape.scalar(fn(tape)));
    };
    double worst = 0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto& data = params[p].value.data;
        for (std::size_t k = 0; k < data.size(); ++k) {
            const T saved = data[k];
            data[k] = static_cast<T>(saved + eps);
            const double up = evaluate();
            data[k] = static_cast<T>(saved - eps);
            const double down = evaluate();
            data[k] = saved;
            const double numeric = (up - down) / (2 * eps);
            const double a = static_cast<double>(analytic.tensors[p].data[k]);
            const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
            worst = std::max(worst, std::abs(a - numeric) / denom);
        }
    }
    return worst;
}

}  // namespace cce::nn
