#include "hpqa/vocab.hpp"

#include <cstdio>

namespace hpqa {

Vocab::Vocab(int word_count, int marker_count)
    : word_count_(word_count), marker_count_(marker_count) {
    tokens_ = {"<unk>", "<bos>", "<eos>", "<sep>", "<ex>",  "<ab>",  "<mc>", "find",
               "apply", "pick",  "(A)",   "(B)",   "(C)",   "(D)",   "(E)"};
    char buf[16];
    for (int i = 0; i < marker_count_; ++i) {
        std::snprintf(buf, sizeof(buf), "m%02d", i);
        tokens_.emplace_back(buf);
    }
    for (int i = 0; i < word_count_; ++i) {
        std::snprintf(buf, sizeof(buf), "w%02d", i);
        tokens_.emplace_back(buf);
    }
    for (int i = 0; i < static_cast<int>(tokens_.size()); ++i) index_[tokens_[i]] = i;
}

int Vocab::id(std::string_view tok) const {
    auto it = index_.find(std::string(tok));
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> Vocab::split_ws(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t' || text[i] == '\n')) ++i;
        std::size_t j = i;
        while (j < text.size() && text[j] != ' ' && text[j] != '\t' && text[j] != '\n') ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

std::vector<int> Vocab::tokenize(std::string_view text) const {
    std::vector<int> out;
    for (const auto& tok : split_ws(text)) out.push_back(id(tok));
    return out;
}

std::string Vocab::detokenize(const std::vector<int>& ids) const {
    std::string out;
    for (int id : ids) {
        if (id == kBos || id == kEos || id == kSep) continue;
        if (id < 0 || id >= size()) continue;
        if (!out.empty()) out += ' ';
        out += tokens_[static_cast<std::size_t>(id)];
    }
    return out;
}

}  // namespace hpqa
