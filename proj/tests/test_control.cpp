#include <random>

#include "doctest.h"
#include "vp2p/control.hpp"
#include "vp2p/rng.hpp"

using namespace vp2p;

namespace {

Eigen::MatrixXd random_stochastic(int rows, int cols, uint64_t seed) {
    auto rng = make_rng(seed);
    std::uniform_real_distribution<double> u(0.1, 1.0);
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += (m(r, c) = u(rng));
        m.row(r) /= s;
    }
    return m;
}

}  // namespace

TEST_CASE("attention store: record, read back, overwrite") {
    AttentionStore store;
    auto a = random_stochastic(4, 3, 1);
    store.record(10, 0, a);
    CHECK(store.at(10, 0) == a);
    CHECK(store.has(10, 0));
    CHECK(!store.has(10, 1));
    CHECK(!store.has(9, 0));

    // overwrite: the second record replaces the first everywhere
    auto b = random_stochastic(4, 3, 2);
    store.record(10, 0, b);
    CHECK(store.at(10, 0) == b);
    auto avg = store.averaged_map(1, 10, 0);
    CHECK((avg - b.col(1)).cwiseAbs().maxCoeff() <= 1e-15);

    Eigen::MatrixXd bad = Eigen::MatrixXd::Constant(2, 2, 0.25);  // rows sum to 0.5
    CHECK_THROWS(store.record(5, 0, bad));
}

TEST_CASE("averaged maps match brute-force recomputation") {
    AttentionStore store;
    std::vector<Eigen::MatrixXd> recorded;
    for (int t = 1; t <= 20; ++t) {
        auto m = random_stochastic(6, 4, 100 + t);
        recorded.push_back(m);
        store.record(t, 0, m);
    }

    // single step and two-term mean
    AttentionStore tiny;
    tiny.record(3, 0, recorded[0]);
    CHECK((tiny.averaged_map(2, 3, 0) - recorded[0].col(2)).cwiseAbs().maxCoeff() == 0.0);
    tiny.record(4, 0, recorded[1]);
    Eigen::VectorXd two = (recorded[0].col(2) + recorded[1].col(2)) / 2.0;
    CHECK((tiny.averaged_map(2, 3, 0) - two).cwiseAbs().maxCoeff() <= 1e-15);

    // brute force over every suffix window
    for (int t = 1; t <= 20; ++t) {
        for (int word = 0; word < 4; ++word) {
            Eigen::VectorXd sum = Eigen::VectorXd::Zero(6);
            for (int s = t; s <= 20; ++s) sum += recorded[s - 1].col(word);
            Eigen::VectorXd brute = sum / double(20 - t + 1);
            CHECK((store.averaged_map(word, t, 0) - brute).cwiseAbs().maxCoeff() <= 1e-12);
        }
    }

    CHECK_THROWS(store.averaged_map(0, 21, 0));
    CHECK_THROWS(AttentionStore().averaged_map(0, 1, 0));
}

TEST_CASE("swap injection window semantics") {
    std::vector<Eigen::MatrixXd> src{random_stochastic(4, 2, 7)};
    std::vector<Eigen::MatrixXd> dst{random_stochastic(4, 2, 8)};

    CHECK(edit_swap(src, dst, 0, 5)[0] == src[0]);   // inside the window
    CHECK(edit_swap(src, dst, 4, 5)[0] == src[0]);
    CHECK(edit_swap(src, dst, 5, 5)[0] == dst[0]);   // outside
    CHECK(edit_swap(src, dst, 9, 5)[0] == dst[0]);
    CHECK(edit_swap(src, dst, 0, 0)[0] == dst[0]);   // tau = 0: never inject

    std::vector<Eigen::MatrixXd> wide{random_stochastic(4, 3, 9)};
    CHECK_THROWS(edit_swap(wide, dst, 0, 5));
}

TEST_CASE("refinement splices mapped source columns and renormalizes") {
    // "a dog" -> "a robotic dog" style alignment: {0->0, 2->1}, new token 1
    Alignment align;
    align.map[0] = 0;
    align.map[2] = 1;
    align.new_tokens = {1};

    std::vector<Eigen::MatrixXd> src{random_stochastic(4, 2, 11)};
    std::vector<Eigen::MatrixXd> dst{random_stochastic(4, 3, 12)};

    auto out = edit_refine(src, dst, align, 0, 5);
    // hand-assembled expectation
    Eigen::MatrixXd expect(4, 3);
    expect.col(0) = src[0].col(0);
    expect.col(1) = dst[0].col(1);
    expect.col(2) = src[0].col(1);
    for (int r = 0; r < 4; ++r) expect.row(r) /= expect.row(r).sum();
    CHECK((out[0] - expect).cwiseAbs().maxCoeff() <= 1e-15);
    for (int r = 0; r < 4; ++r) CHECK(out[0].row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));

    // outside the window: target maps untouched
    CHECK(edit_refine(src, dst, align, 5, 5)[0] == dst[0]);

    // empty alignment: renormalization is a no-op on stochastic rows
    Alignment empty;
    auto same = edit_refine(src, dst, empty, 0, 5);
    CHECK((same[0] - dst[0]).cwiseAbs().maxCoeff() <= 1e-15);

    // identity alignment on equal-length prompts degenerates to swap
    Alignment ident;
    ident.map[0] = 0;
    ident.map[1] = 1;
    std::vector<Eigen::MatrixXd> dst2{random_stochastic(4, 2, 13)};
    auto refined = edit_refine(src, dst2, ident, 0, 5);
    auto swapped = edit_swap(src, dst2, 0, 5);
    CHECK((refined[0] - swapped[0]).cwiseAbs().maxCoeff() <= 1e-15);

    Alignment oob;
    oob.map[5] = 0;
    CHECK_THROWS(edit_refine(src, dst, oob, 0, 5));
}

TEST_CASE("re-weighting scales only the targeted column") {
    Eigen::MatrixXd m(2, 2);
    m << 0.25, 0.75, 0.5, 0.5;
    std::vector<Eigen::MatrixXd> maps{m};

    CHECK(reweight(maps, 0, 1.0)[0] == m);

    auto zeroed = reweight(maps, 1, 0.0)[0];
    CHECK(zeroed.col(1).isZero(0.0));
    CHECK(zeroed.col(0) == m.col(0));

    auto doubled = reweight(maps, 0, 2.0)[0];
    Eigen::MatrixXd expect(2, 2);
    expect << 0.5, 0.75, 1.0, 0.5;
    CHECK(doubled == expect);

    CHECK_THROWS(reweight(maps, 2, 1.0));
}

TEST_CASE("union mask binarization") {
    const int H = 2, W = 2;
    std::vector<Eigen::VectorXd> constant{Eigen::VectorXd::Constant(4, 0.5)};
    auto ones = binarize_union(constant, constant, 0.3, H, W);
    for (uint8_t v : ones.data) CHECK(v == 1);  // max-normalized constant = 1 everywhere
    CHECK(ones.provenance == "attention");

    std::vector<Eigen::VectorXd> zero{Eigen::VectorXd::Zero(4)};
    auto none = binarize_union(zero, zero, 0.3, H, W);
    for (uint8_t v : none.data) CHECK(v == 0);

    // src marks sites {1,2}, dst marks {2,3} -> union {1,2,3}
    Eigen::VectorXd a = Eigen::VectorXd::Zero(4), b = Eigen::VectorXd::Zero(4);
    a(1) = 1.0;
    a(2) = 0.9;
    b(2) = 0.8;
    b(3) = 1.0;
    auto u = binarize_union({a}, {b}, 0.5, H, W);
    CHECK(u.data == std::vector<uint8_t>{0, 1, 1, 1});

    // thresholding is strict: a value exactly at the threshold stays out
    Eigen::VectorXd edge = Eigen::VectorXd::Zero(4);
    edge(0) = 1.0;
    edge(1) = 0.5;
    auto strict = binarize_union({edge}, {Eigen::VectorXd::Zero(4)}, 0.5, H, W);
    CHECK(strict.data == std::vector<uint8_t>{1, 0, 0, 0});

    // lowering the threshold never shrinks the mask
    auto rng = make_rng(77);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    Eigen::VectorXd r1(4), r2(4);
    for (int i = 0; i < 4; ++i) {
        r1(i) = unif(rng);
        r2(i) = unif(rng);
    }
    auto hi = binarize_union({r1}, {r2}, 0.7, H, W);
    auto lo = binarize_union({r1}, {r2}, 0.2, H, W);
    for (size_t i = 0; i < hi.data.size(); ++i)
        if (hi.data[i]) CHECK(lo.data[i] == 1);
}

TEST_CASE("blend is a bit-exact per-site select") {
    LatentVideo src(1, 2, 2, 2), dst(1, 2, 2, 2);
    auto rng = make_rng(123);
    fill_gaussian(rng, src.data.data(), src.data.size());
    fill_gaussian(rng, dst.data.data(), dst.data.size());

    RegionMask zero(1, 2, 2), one(1, 2, 2), checker(1, 2, 2);
    for (auto& v : one.data) v = 1;
    checker.at(0, 0, 0) = 1;
    checker.at(0, 1, 1) = 1;

    CHECK(blend(src, dst, zero).data == src.data);
    CHECK(blend(src, dst, one).data == dst.data);

    auto mix = blend(src, dst, checker);
    for (int c = 0; c < 2; ++c) {
        CHECK(mix.at(0, c, 0, 0) == dst.at(0, c, 0, 0));
        CHECK(mix.at(0, c, 0, 1) == src.at(0, c, 0, 1));
        CHECK(mix.at(0, c, 1, 0) == src.at(0, c, 1, 0));
        CHECK(mix.at(0, c, 1, 1) == dst.at(0, c, 1, 1));
    }

    LatentVideo bad(1, 2, 3, 2);
    CHECK_THROWS(blend(src, bad, zero));
    RegionMask badmask(2, 2, 2);
    CHECK_THROWS(blend(src, dst, badmask));
}

TEST_CASE("edit spec validation") {
    EditSpec ok;
    CHECK_NOTHROW(ok.validate());
    EditSpec bad = ok;
    bad.tau_ratio = 1.5;
    CHECK_THROWS(bad.validate());
    bad = ok;
    bad.refine_ratio = -0.1;
    CHECK_THROWS(bad.validate());
    bad = ok;
    bad.mask_threshold = 0.0;
    CHECK_THROWS(bad.validate());
    bad = ok;
    bad.mask_threshold = 1.0;
    CHECK_THROWS(bad.validate());
}
