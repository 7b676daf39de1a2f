#include <catch2/catch_amalgamated.hpp>

#include "vegn/gradcheck.hpp"
#include "vegn/rng.hpp"

using namespace vegn;

TEST_CASE("grad_check on a linear layer passes at 1e-6", "[gradcheck]") {
    auto rng = make_rng(21, "lin");
    Parameter w("w", random_uniform(3, 2, -1.0, 1.0, rng));
    Parameter b("b", random_uniform(1, 2, -1.0, 1.0, rng));
    Tensor x = random_uniform(5, 3, -1.0, 1.0, rng);

    auto make_loss = [&](Tape& t) {
        Var out = add(matmul(t.constant(x), t.param(w)), t.param(b));
        return mean_all(mul(out, out));
    };
    auto report = grad_check(make_loss, {&w, &b}, 1e-5, 1e-6);
    CHECK(report.pass());
    CHECK(report.entries.size() == 2);
    CHECK(report.max_rel_err() < 1e-6);
}

TEST_CASE("grad_check flags a broken gradient", "[gradcheck]") {
    Parameter x("x", Tensor::scalar(0.7));
    // A deliberately wrong backward rule: forward x^2, backward pretends 3x.
    auto make_loss = [&](Tape& t) {
        Var vx = t.param(x);
        const double v = vx.val().item();
        Var out = t.emit("bogus", Tensor::scalar(v * v));
        t.set_backward(out, [vx, out](Tape& tp) {
            tp.grad(vx).values()[0] += 3.0 * tp.value(vx).item() * tp.grad(out).item();
        });
        return out;
    };
    auto report = grad_check(make_loss, {&x}, 1e-5, 1e-4);
    CHECK_FALSE(report.pass());
}

TEST_CASE("grad_check with no parameters returns an empty report", "[gradcheck]") {
    auto make_loss = [](Tape& t) { return t.constant(Tensor::scalar(1.0)); };
    auto report = grad_check(make_loss, {}, 1e-5, 1e-6);
    CHECK(report.entries.empty());
    CHECK(report.pass());
}
