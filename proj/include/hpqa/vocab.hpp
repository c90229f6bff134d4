#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace hpqa {

// Closed synthetic vocabulary: fixed specials, a marker block, and a word
// block sized by the stream spec. Out-of-vocabulary tokens map to <unk>.
class Vocab {
public:
    static constexpr int kUnk = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSep = 3;
    static constexpr int kFmtExtractive = 4;   // <ex>
    static constexpr int kFmtAbstractive = 5;  // <ab>
    static constexpr int kFmtMultiChoice = 6;  // <mc>
    static constexpr int kHeadFind = 7;        // extractive question head
    static constexpr int kHeadApply = 8;       // abstractive question head
    static constexpr int kHeadPick = 9;        // multichoice question head
    static constexpr int kOptionA = 10;        // "(A)" .. "(E)"
    static constexpr int kNumOptionLetters = 5;
    static constexpr int kNumSpecials = 15;

    Vocab() = default;
    Vocab(int word_count, int marker_count);

    int size() const { return static_cast<int>(tokens_.size()); }
    int word_count() const { return word_count_; }
    int marker_count() const { return marker_count_; }

    int marker_id(int i) const { return kNumSpecials + i; }
    int word_id(int i) const { return kNumSpecials + marker_count_ + i; }
    bool is_marker(int id) const {
        return id >= kNumSpecials && id < kNumSpecials + marker_count_;
    }

    const std::string& token(int id) const { return tokens_[static_cast<std::size_t>(id)]; }

    // Unknown strings resolve to <unk>; tokenization never fails.
    int id(std::string_view tok) const;

    std::vector<int> tokenize(std::string_view text) const;

    // Joins tokens with single spaces, dropping <bos>/<eos>/<sep>.
    std::string detokenize(const std::vector<int>& ids) const;

    static std::vector<std::string> split_ws(std::string_view text);

private:
    int word_count_ = 0;
    int marker_count_ = 0;
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace hpqa
