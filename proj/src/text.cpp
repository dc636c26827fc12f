#include "vp2p/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vp2p/rng.hpp"

namespace vp2p {

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("vocabulary: cannot open " + path);
    Vocabulary v;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        int id = static_cast<int>(v.words_.size());
        v.words_.push_back(line);
        v.index_.emplace(line, id);
    }
    if (v.words_.size() < 2 || v.words_[0] != "<null>" || v.words_[1] != "<unk>")
        throw std::runtime_error("vocabulary: first two lines must be <null> and <unk>");
    return v;
}

int Vocabulary::id_of(const std::string& word) const {
    auto it = index_.find(word);
    return it == index_.end() ? unk_id_ : it->second;
}

const std::string& Vocabulary::word_of(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocabulary: bad token id");
    return words_[id];
}

Prompt tokenize(const std::string& raw, const Vocabulary& vocab) {
    Prompt p;
    p.raw = raw;
    std::string lowered = raw;
    std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    std::istringstream iss(lowered);
    std::string word;
    while (iss >> word) p.tokens.push_back(vocab.id_of(word));
    if (p.tokens.empty()) throw std::invalid_argument("tokenize: empty prompt");
    return p;
}

Eigen::RowVectorXd embed_token(int token_id, uint64_t seed, int dim) {
    auto rng = make_rng(mix_seed(seed, static_cast<uint64_t>(token_id)));
    Eigen::RowVectorXd row(dim);
    fill_gaussian(rng, row.data(), static_cast<size_t>(dim));
    return row;
}

PromptEmbedding embed_prompt(const Prompt& p, uint64_t seed, int dim) {
    PromptEmbedding e(p.length(), dim);
    for (int i = 0; i < p.length(); ++i) e.row(i) = embed_token(p.tokens[i], seed, dim);
    return e;
}

Alignment align_prompts(const Prompt& src, const Prompt& dst) {
    const int ns = src.length(), nd = dst.length();
    // LCS table over token ids; ties broken toward the earliest source index.
    std::vector<std::vector<int>> lcs(ns + 1, std::vector<int>(nd + 1, 0));
    for (int i = ns - 1; i >= 0; --i)
        for (int j = nd - 1; j >= 0; --j)
            lcs[i][j] = src.tokens[i] == dst.tokens[j]
                            ? lcs[i + 1][j + 1] + 1
                            : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    Alignment a;
    int i = 0, j = 0;
    while (i < ns && j < nd) {
        if (src.tokens[i] == dst.tokens[j] && lcs[i][j] == lcs[i + 1][j + 1] + 1) {
            a.map[j] = i;
            ++i;
            ++j;
        } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
            ++i;
        } else {
            ++j;
        }
    }
    for (int k = 0; k < nd; ++k)
        if (!a.map.count(k)) a.new_tokens.push_back(k);
    return a;
}

}  // namespace vp2p
