#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace vp2p {

// Closed-world word registry loaded from a plain-text file, one word per line,
// line number = token id. Lines 0 and 1 are the reserved <null> and <unk> tokens.
class Vocabulary {
public:
    static Vocabulary load(const std::string& path);

    int id_of(const std::string& word) const;  // UNK for unknown words
    const std::string& word_of(int id) const;
    int size() const { return static_cast<int>(words_.size()); }

    int null_id() const { return null_id_; }
    int unk_id() const { return unk_id_; }

private:
    std::vector<std::string> words_;
    std::map<std::string, int> index_;
    int null_id_ = 0;
    int unk_id_ = 1;
};

struct Prompt {
    std::string raw;
    std::vector<int> tokens;

    int length() const { return static_cast<int>(tokens.size()); }
};

// L x d_txt; row i is a pure function of token id i under a fixed seed.
using PromptEmbedding = Eigen::MatrixXd;

constexpr int kTextDim = 16;

// Partial injective target-index -> source-index map plus the unmapped
// target positions; produced by LCS over token ids.
struct Alignment {
    std::map<int, int> map;       // target index -> source index
    std::vector<int> new_tokens;  // target indices with no source counterpart
};

Prompt tokenize(const std::string& raw, const Vocabulary& vocab);

PromptEmbedding embed_prompt(const Prompt& p, uint64_t seed, int dim = kTextDim);

// One embedding row for a bare token id (used for the null embedding).
Eigen::RowVectorXd embed_token(int token_id, uint64_t seed, int dim = kTextDim);

Alignment align_prompts(const Prompt& src, const Prompt& dst);

}  // namespace vp2p
