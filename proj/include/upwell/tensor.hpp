#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace upwell::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node {
    Shape shape;
    std::vector<double> values;
    std::vector<double> grad;  // allocated lazily, same length as values
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> parents;
    // Accumulates d(loss)/d(parent) into each tracked parent, given this
    // node's grad. Empty for leaves.
    std::function<void(Node&)> backward_fn;

    void ensure_grad();
};

}  // namespace detail

// Dense float64 N-d array participating in reverse-mode differentiation.
// A Tensor is a cheap shared handle onto a graph node; ops build the graph
// as they compute forward values. Gradients accumulate: call zero_grad
// between backward passes, otherwise contributions add up.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);
    static Tensor scalar(double value);
    static Tensor from(const Shape& shape, std::vector<double> values);
    // Tracked leaf (a parameter or a grad-check input).
    static Tensor leaf(const Shape& shape, std::vector<double> values);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const;
    std::size_t numel() const;
    std::size_t ndim() const;

    const std::vector<double>& values() const;
    std::vector<double>& values_mut();  // leaves only; in-place parameter updates
    bool requires_grad() const;
    const std::vector<double>& grad() const;
    void zero_grad();

    double item() const;  // scalar tensors

    detail::Node* node() const { return node_.get(); }
    std::shared_ptr<detail::Node> handle() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
    std::shared_ptr<detail::Node> node_;

    friend Tensor make_op(Shape shape, std::vector<double> values,
                          std::vector<Tensor> parents,
                          std::function<void(detail::Node&)> backward);
};

// --- core ops -------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);  // broadcasting
Tensor sub(const Tensor& a, const Tensor& b);  // broadcasting
Tensor mul(const Tensor& a, const Tensor& b);  // broadcasting, elementwise
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

// Batched matrix product. Both operands are stacks of matrices over
// identical leading dims; a 2-d operand against an N-d one is broadcast
// across the stack.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor transpose(const Tensor& a, std::size_t axis_a, std::size_t axis_b);
Tensor reshape(const Tensor& a, const Shape& shape);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

Tensor sum(const Tensor& a);
Tensor sum_axis(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean_axis(const Tensor& a, std::size_t axis, bool keepdim = false);

Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor softmax(const Tensor& a, std::size_t axis);
Tensor layer_norm(const Tensor& a, std::size_t axis, double eps = 1e-5);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

// Runs reverse-mode accumulation from a scalar loss into every tracked
// leaf reachable from it. Rejects non-scalar input.
void backward(const Tensor& loss);

// Compares the analytic gradient of f at the given points against central
// finite differences. Returns the worst relative error over all elements,
// with a 1e-8 absolute floor in the denominator. Throws NumericError if
// any value involved is non-finite.
double grad_check(const std::function<Tensor(const std::vector<Tensor>&)>& f,
                  const std::vector<Tensor>& points, double step);

}  // namespace upwell::ad
