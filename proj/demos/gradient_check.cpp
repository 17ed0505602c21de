// Shows the two independent gradient routes the library provides: reverse-mode
// differentiation through the recorded graph, and the central finite-difference
// probe. Useful as a template when adding new primitives.

#include <cstdio>

#include "msid/gradcheck.hpp"
#include "msid/graph.hpp"
#include "msid/rng.hpp"

using namespace msid;

int main() {
    Rng rng(42);
    Tensor w_init({3, 4});
    Tensor x_init({2, 3});
    for (std::size_t i = 0; i < w_init.size(); ++i) w_init.at(i) = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < x_init.size(); ++i) x_init.at(i) = rng.uniform(-1.0, 1.0);

    // loss(w) = sum(sigmoid(x w)^2), reverse mode
    Variable w(w_init);
    Graph g;
    Value loss = g.sum_sq(g.sigmoid(g.matmul(g.input(x_init), g.leaf(w))));
    g.backward(loss);
    std::printf("loss = %.6f\n", g.value(loss).item());

    // same loss through the finite-difference oracle
    auto scalar_fn = [&](const Tensor& probe) {
        Graph gg;
        return gg.value(gg.sum_sq(gg.sigmoid(gg.matmul(gg.input(x_init), gg.input(probe))))).item();
    };
    Tensor fd = finite_difference_gradient(scalar_fn, w_init);

    std::printf("max relative disagreement: %.3e\n", max_relative_error(w.grad, fd));
    std::printf("d loss / d w[0,0]: reverse %.8f, finite difference %.8f\n", w.grad(0, 0), fd(0, 0));
    return 0;
}
