#include <cmath>

#include "doctest.h"
#include "vp2p/text.hpp"

using namespace vp2p;

namespace {

const Vocabulary& vocab() {
    static Vocabulary v = Vocabulary::load(std::string(VP2P_DATA_DIR) + "/vocab.txt");
    return v;
}

}  // namespace

TEST_CASE("tokenize: determinism, case folding, unknown words") {
    auto p1 = tokenize("a cat", vocab());
    auto p2 = tokenize("a CAT", vocab());
    CHECK(p1.length() == 2);
    CHECK(p1.tokens == p2.tokens);
    CHECK(p1.tokens[0] == vocab().id_of("a"));
    CHECK(p1.tokens[1] == vocab().id_of("cat"));

    auto p3 = tokenize("a zxqv", vocab());
    CHECK(p3.tokens[0] == vocab().id_of("a"));
    CHECK(p3.tokens[1] == vocab().unk_id());

    CHECK_THROWS(tokenize("", vocab()));
    CHECK_THROWS(tokenize("   ", vocab()));
}

TEST_CASE("vocabulary reserves <null> and <unk>") {
    CHECK(vocab().null_id() == 0);
    CHECK(vocab().unk_id() == 1);
    CHECK(vocab().word_of(0) == "<null>");
    CHECK(vocab().word_of(1) == "<unk>");
    CHECK(vocab().size() >= 64);
    CHECK_THROWS(vocab().word_of(-1));
    CHECK_THROWS(vocab().word_of(vocab().size()));
}

TEST_CASE("embed_prompt: lookup-table semantics") {
    auto p = tokenize("a red square", vocab());
    auto e1 = embed_prompt(p, 7);
    auto e2 = embed_prompt(p, 7);
    CHECK(e1 == e2);
    CHECK(e1.rows() == 3);
    CHECK(e1.cols() == kTextDim);

    // shared token -> identical rows across prompts
    auto q = tokenize("a blue square", vocab());
    auto eq = embed_prompt(q, 7);
    CHECK(e1.row(0) == eq.row(0));
    CHECK(e1.row(2) == eq.row(2));
    CHECK(e1.row(1) != eq.row(1));

    // different seed -> different table
    auto e3 = embed_prompt(p, 8);
    CHECK(e1 != e3);

    CHECK(embed_token(vocab().id_of("red"), 7) == e1.row(1));
}

TEST_CASE("embed rows have unit-variance statistics across the registry") {
    // squared row norm ~ chi^2(d): mean d, variance 2d. Check the registry
    // mean within 3 sigma of the estimator.
    const int d = kTextDim;
    const int N = vocab().size();
    double sum = 0.0;
    for (int id = 0; id < N; ++id) sum += embed_token(id, 7, d).squaredNorm();
    const double mean = sum / N;
    const double sigma = std::sqrt(2.0 * d / N);
    CHECK(std::abs(mean - d) <= 3.0 * sigma);
}

TEST_CASE("align_prompts LCS cases") {
    auto src = tokenize("a dog", vocab());
    auto same = align_prompts(src, src);
    CHECK(same.map.size() == 2);
    CHECK(same.map.at(0) == 0);
    CHECK(same.map.at(1) == 1);
    CHECK(same.new_tokens.empty());

    auto dst = tokenize("a robotic dog", vocab());
    auto a = align_prompts(src, dst);
    CHECK(a.map.size() == 2);
    CHECK(a.map.at(0) == 0);
    CHECK(a.map.at(2) == 1);
    CHECK(a.new_tokens == std::vector<int>{1});

    auto disjoint = align_prompts(tokenize("red square", vocab()), tokenize("blue circle", vocab()));
    CHECK(disjoint.map.empty());
    CHECK(disjoint.new_tokens == std::vector<int>{0, 1});
}

TEST_CASE("alignment is injective and order-preserving") {
    auto src = tokenize("the red square on a red field", vocab());
    auto dst = tokenize("a red fluffy square on the field", vocab());
    auto a = align_prompts(src, dst);
    int prev_src = -1;
    std::vector<bool> used(src.length(), false);
    for (const auto& [dst_idx, src_idx] : a.map) {  // std::map iterates dst ascending
        CHECK(src.tokens[src_idx] == dst.tokens[dst_idx]);
        CHECK(src_idx > prev_src);
        CHECK(!used[src_idx]);
        used[src_idx] = true;
        prev_src = src_idx;
    }
    // every target index accounted for exactly once
    CHECK(static_cast<int>(a.map.size() + a.new_tokens.size()) == dst.length());
}
