#include "pct/diff_engine.hpp"

#include "pct/binio.hpp"
#include "pct/errors.hpp"
#include "support/helpers.hpp"

#include <doctest.h>

#include <cmath>

using namespace pct;

namespace {

Tensor random_tensor(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

ParamStore store_of(std::initializer_list<std::pair<std::string, Tensor>> items) {
    ParamStore s;
    for (const auto& [name, t] : items) s.add(name, t);
    return s;
}

} // namespace

TEST_CASE("mlp_forward basics") {
    MlpSpec spec{"mlp", {3, 4, 2}};
    SUBCASE("zero weights and biases give zero output") {
        ParamStore params = store_of({{"mlp.0.w", Tensor::zeros(3, 4)},
                                      {"mlp.0.b", Tensor::zeros(1, 4)},
                                      {"mlp.1.w", Tensor::zeros(4, 2)},
                                      {"mlp.1.b", Tensor::zeros(1, 2)}});
        Tape tape;
        ParamBinding binding = bind_params(tape, params);
        Rng rng(1);
        Value out = mlp_forward(tape, binding, spec, tape.constant(random_tensor(rng, 5, 3)));
        for (double v : tape.value(out).data) CHECK(v == 0.0);
    }
    SUBCASE("identity single layer passes input through") {
        MlpSpec id{"id", {3, 3}};
        ParamStore params =
            store_of({{"id.0.w", Tensor::identity(3)}, {"id.0.b", Tensor::zeros(1, 3)}});
        Tape tape;
        ParamBinding binding = bind_params(tape, params);
        Rng rng(2);
        Tensor x = random_tensor(rng, 4, 3);
        Value out = mlp_forward(tape, binding, id, tape.constant(x));
        CHECK(test::max_abs_diff(tape.value(out), x) == 0.0);
    }
    SUBCASE("matches an independent straight-line forward computation") {
        Rng rng(3);
        ParamStore params = store_of({{"mlp.0.w", random_tensor(rng, 3, 4)},
                                      {"mlp.0.b", random_tensor(rng, 1, 4)},
                                      {"mlp.1.w", random_tensor(rng, 4, 2)},
                                      {"mlp.1.b", random_tensor(rng, 1, 2)}});
        Tensor x = random_tensor(rng, 4, 3);
        Tape tape;
        ParamBinding binding = bind_params(tape, params);
        Value out = mlp_forward(tape, binding, spec, tape.constant(x));

        // Plain loops, no tape.
        const Tensor& w0 = params.get("mlp.0.w");
        const Tensor& b0 = params.get("mlp.0.b");
        const Tensor& w1 = params.get("mlp.1.w");
        const Tensor& b1 = params.get("mlp.1.b");
        Tensor h(4, 4);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double acc = b0(0, j);
                for (int k = 0; k < 3; ++k) acc += x(i, k) * w0(k, j);
                h(i, j) = acc > 0 ? acc : 0;
            }
        Tensor y(4, 2);
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 2; ++j) {
                double acc = b1(0, j);
                for (int k = 0; k < 4; ++k) acc += h(i, k) * w1(k, j);
                y(i, j) = acc;
            }
        CHECK(test::max_abs_diff(tape.value(out), y) <= 1e-14);
    }
    SUBCASE("shape mismatch names the tensor") {
        ParamStore params = store_of({{"mlp.0.w", Tensor::zeros(2, 4)}, // wrong fan-in
                                      {"mlp.0.b", Tensor::zeros(1, 4)},
                                      {"mlp.1.w", Tensor::zeros(4, 2)},
                                      {"mlp.1.b", Tensor::zeros(1, 2)}});
        Tape tape;
        ParamBinding binding = bind_params(tape, params);
        Rng rng(1);
        CHECK_THROWS_AS(mlp_forward(tape, binding, spec, tape.constant(random_tensor(rng, 5, 3))),
                        DataError);
    }
}

TEST_CASE("gradients of every op match finite differences") {
    Rng rng(42);
    // One composite loss touching most of the vocabulary; the op-specific
    // cases below cover the rest in isolation.
    SUBCASE("composite") {
        ParamStore params = store_of({{"w", random_tensor(rng, 3, 4)},
                                      {"b", random_tensor(rng, 1, 4)},
                                      {"x", random_tensor(rng, 5, 3)},
                                      {"r", random_tensor(rng, 1, 4, 0.5, 1.5)},
                                      {"c", random_tensor(rng, 5, 1, 0.5, 1.5)}});
        LossFn loss = [](Tape& t, const ParamBinding& p) {
            Value h = t.affine(p("x"), p("w"), p("b"));
            h = t.relu(h);
            h = t.mul_rowvec(h, p("r"));
            h = t.add_rowvec(h, p("r"));
            h = t.scale_rows(h, p("c"));
            Value m = t.matmul(t.transpose(h), h);     // 4x4
            Value e = t.exp(t.scale(m, 0.05));
            Value s = t.sqrt(t.add(t.mul(e, e), t.div(e, e)));
            return t.sum_all(t.add(t.mean_rows(s), t.max_rows(s)));
        };
        GradCheckResult res = grad_check(loss, params);
        CAPTURE(res.worst_param);
        CHECK(res.max_rel_err <= 1e-7);
    }
    SUBCASE("indexing ops") {
        ParamStore params = store_of({{"x", random_tensor(rng, 6, 4)}});
        LossFn loss = [](Tape& t, const ParamBinding& p) {
            Value g = t.gather_rows(p("x"), {0, 2, 2, 5, 1});
            Value s = t.segment_sum(g, {0, 1, 1, 0, 2}, 3);
            Value cat = t.concat_cols({s, t.slice_cols(s, 1, 2)});
            Value rows = t.concat_rows({cat, cat});
            Value rs = t.reshape(rows, 3, 12);
            return t.sum_all(t.mul(rs, rs));
        };
        GradCheckResult res = grad_check(loss, params);
        CHECK(res.max_rel_err <= 1e-8);
    }
    SUBCASE("reductions") {
        ParamStore params = store_of({{"x", random_tensor(rng, 7, 3)}});
        LossFn loss = [](Tape& t, const ParamBinding& p) {
            Value a = t.row_sums(p("x"));
            Value b = t.max_rows(p("x"));
            Value c = t.mean_rows(t.mul(p("x"), p("x")));
            return t.add(t.sum_all(a), t.add(t.sum_all(b), t.sum_all(c)));
        };
        GradCheckResult res = grad_check(loss, params);
        CHECK(res.max_rel_err <= 1e-8);
    }
    SUBCASE("sub and broadcast") {
        ParamStore params = store_of({{"a", random_tensor(rng, 4, 3)},
                                      {"r", random_tensor(rng, 1, 3)}});
        LossFn loss = [](Tape& t, const ParamBinding& p) {
            Value d = t.sub(p("a"), t.broadcast_row(p("r"), 4));
            return t.sum_all(t.mul(d, d));
        };
        GradCheckResult res = grad_check(loss, params);
        CHECK(res.max_rel_err <= 1e-8);
    }
}

TEST_CASE("grad_check on a quadratic is nearly exact") {
    Rng rng(5);
    ParamStore params = store_of({{"w", random_tensor(rng, 4, 4)}});
    LossFn loss = [](Tape& t, const ParamBinding& p) { return t.sum_all(t.mul(p("w"), p("w"))); };
    GradCheckResult res = grad_check(loss, params);
    CHECK(res.max_rel_err <= 1e-9);

    // The analytic gradient is 2W.
    Tape tape;
    ParamBinding binding = bind_params(tape, params);
    Value l = loss(tape, binding);
    tape.backward(l);
    Tensor g = tape.grad(binding("w"));
    const Tensor& w = params.get("w");
    for (size_t i = 0; i < g.data.size(); ++i)
        CHECK(g.data[i] == doctest::Approx(2.0 * w.data[i]).epsilon(1e-12));
}

TEST_CASE("grad_check excludes parameters at a ReLU kink") {
    // One parameter sits exactly at the activation boundary: reverse mode
    // uses the 0 subgradient while central differences straddle the kink.
    ParamStore params = store_of({{"w", Tensor::zeros(1, 2)}});
    params.get("w")(0, 1) = 1.0;
    LossFn loss = [](Tape& t, const ParamBinding& p) { return t.sum_all(t.relu(p("w"))); };
    GradCheckResult plain = grad_check(loss, params);
    CHECK(plain.max_rel_err >= 0.4); // the kink dominates
    CHECK(plain.worst_index == 0);
    GradCheckResult masked = grad_check(loss, params, 1e-6,
                                        [](const std::string&, int i) { return i == 0; });
    CHECK(masked.checked == 1);
    CHECK(masked.max_rel_err <= 1e-9);
}

TEST_CASE("backward is deterministic") {
    Rng rng(6);
    ParamStore params = store_of({{"w", random_tensor(rng, 8, 8)},
                                  {"x", random_tensor(rng, 8, 8)}});
    LossFn loss = [](Tape& t, const ParamBinding& p) {
        return t.sum_all(t.relu(t.matmul(p("x"), p("w"))));
    };
    auto run = [&]() {
        Tape tape;
        ParamBinding binding = bind_params(tape, params);
        Value l = loss(tape, binding);
        tape.backward(l);
        return collect_grads(tape, binding);
    };
    auto g1 = run();
    auto g2 = run();
    for (const auto& [name, g] : g1) CHECK(g.data == g2.at(name).data);
}

TEST_CASE("adam_step") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        ParamStore params = store_of({{"w", Tensor::full(2, 2, 0.7)}});
        AdamState state;
        std::map<std::string, Tensor> grads{{"w", Tensor::zeros(2, 2)}};
        adam_step(params, grads, state);
        for (double v : params.get("w").data) CHECK(v == 0.7);
        CHECK(state.step == 1);
    }
    SUBCASE("first step matches the hand-computed update") {
        ParamStore params = store_of({{"w", Tensor::zeros(1, 1)}});
        AdamState state;
        state.cfg.lr = 0.1;
        std::map<std::string, Tensor> grads{{"w", Tensor::full(1, 1, 1.0)}};
        adam_step(params, grads, state);
        // Bias-corrected m_hat = 1, v_hat = 1: theta -= lr / (1 + eps).
        double expected = -0.1 / (1.0 + state.cfg.eps);
        CHECK(params.get("w")(0, 0) == doctest::Approx(expected).epsilon(1e-15));
        CHECK(std::abs(params.get("w")(0, 0) + 0.1) < 1e-8);
    }
    SUBCASE("identical calls from identical states agree bitwise") {
        Rng rng(7);
        ParamStore p1 = store_of({{"w", random_tensor(rng, 3, 3)}});
        ParamStore p2 = p1;
        AdamState s1, s2;
        std::map<std::string, Tensor> grads{{"w", random_tensor(rng, 3, 3)}};
        for (int i = 0; i < 5; ++i) {
            adam_step(p1, grads, s1);
            adam_step(p2, grads, s2);
        }
        CHECK(p1.get("w").data == p2.get("w").data);
    }
}

TEST_CASE("checkpoint save/load") {
    test::TempDir dir("ckpt");
    Rng rng(8);
    ParamStore params = store_of({{"b.bias", random_tensor(rng, 1, 5)},
                                  {"a.weight", random_tensor(rng, 4, 5)}});
    std::string echo = "model.code_len = 16\nseed = 9\n";
    save_checkpoint(dir.file("m.pct1"), params, echo);

    Checkpoint ck = load_checkpoint(dir.file("m.pct1"));
    CHECK(ck.config_echo == echo);
    REQUIRE(ck.params.tensors.size() == 2);
    CHECK(ck.params.get("a.weight").data == params.get("a.weight").data);
    CHECK(ck.params.get("b.bias").data == params.get("b.bias").data);

    // save(load(file)) reproduces the bytes.
    save_checkpoint(dir.file("m2.pct1"), ck.params, ck.config_echo);
    CHECK(binio::read_file(dir.file("m.pct1")) == binio::read_file(dir.file("m2.pct1")));

    SUBCASE("bad magic") {
        auto bytes = binio::read_file(dir.file("m.pct1"));
        bytes[0] = 'X';
        binio::write_file(dir.file("bad.pct1"), bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("bad.pct1")), doctest::Contains("PCT1"),
                             CheckpointError);
    }
    SUBCASE("bad version") {
        auto bytes = binio::read_file(dir.file("m.pct1"));
        bytes[4] = 9;
        binio::write_file(dir.file("v9.pct1"), bytes);
        CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("v9.pct1")), doctest::Contains("version"),
                             CheckpointError);
    }
    SUBCASE("missing file") {
        CHECK_THROWS_AS(load_checkpoint(dir.file("nope.pct1")), CheckpointError);
    }
}

TEST_CASE("xavier init is seeded and in range") {
    Rng a(11), b(11), c(12);
    Tensor t1 = xavier_uniform(30, 10, a);
    Tensor t2 = xavier_uniform(30, 10, b);
    Tensor t3 = xavier_uniform(30, 10, c);
    CHECK(t1.data == t2.data);
    CHECK(t1.data != t3.data);
    double bound = std::sqrt(6.0 / 40.0);
    for (double v : t1.data) {
        CHECK(v >= -bound);
        CHECK(v <= bound);
    }
}
