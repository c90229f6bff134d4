#pragma once

#include <cstdint>
#include <string>

#include "hpqa/stream.hpp"
#include "hpqa/tensor.hpp"

namespace hpqa {

// L2-normalized routing vector; the single geometry keys and boundaries share.
struct QueryVector {
    Vec values;
    std::uint64_t source_hash = 0;
};

// Frozen text-to-vector map. Token unigrams and adjacent bigrams are hashed
// into seeded pseudo-random directions, average-pooled and normalized. No
// parameter of this encoder is ever updated by any loss.
class QueryEncoder {
public:
    QueryEncoder(std::uint64_t seed, int dim);

    QueryVector encode(const std::string& context, const std::string& question) const;
    QueryVector encode(const Sample& s) const { return encode(s.context, s.question); }

    std::uint64_t seed() const { return seed_; }
    int dim() const { return dim_; }

private:
    std::uint64_t seed_;
    int dim_;
};

}  // namespace hpqa
