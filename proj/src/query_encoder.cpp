#include "hpqa/query_encoder.hpp"

#include "hpqa/error.hpp"
#include "hpqa/rng.hpp"

namespace hpqa {

QueryEncoder::QueryEncoder(std::uint64_t seed, int dim) : seed_(seed), dim_(dim) {
    if (dim < 1) throw ValidationError("query encoder dim must be >= 1");
}

QueryVector QueryEncoder::encode(const std::string& context, const std::string& question) const {
    auto ctx_toks = Vocab::split_ws(context);
    auto q_toks = Vocab::split_ws(question);
    if (ctx_toks.empty() && q_toks.empty())
        throw ValidationError("encode_query: empty token sequence");

    // Same surface the backbone sees: format marker, context, <sep>, question.
    std::vector<std::string> toks;
    Format f = infer_format(context, question);
    toks.push_back(f == Format::Extractive ? "<ex>" : f == Format::Abstractive ? "<ab>" : "<mc>");
    for (auto& t : ctx_toks) toks.push_back(std::move(t));
    toks.push_back("<sep>");
    for (auto& t : q_toks) toks.push_back(std::move(t));

    QueryVector q;
    q.values.assign(static_cast<std::size_t>(dim_), 0.0);
    std::size_t n_features = 0;
    auto add_feature = [&](std::uint64_t fh) {
        std::uint64_t h = hash_combine(seed_, fh);
        for (int d = 0; d < dim_; ++d) {
            std::uint64_t u = mix64(h + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(d));
            q.values[static_cast<std::size_t>(d)] +=
                static_cast<double>(u >> 11) * 0x1.0p-52 - 1.0;
        }
        ++n_features;
    };
    for (const auto& t : toks) add_feature(fnv1a64(t));
    for (std::size_t i = 0; i + 1 < toks.size(); ++i)
        add_feature(fnv1a64(toks[i + 1], fnv1a64("\x1e", fnv1a64(toks[i]))));

    for (auto& v : q.values) v /= static_cast<double>(n_features);
    normalize_in_place(q.values);
    q.source_hash = fnv1a64(question, fnv1a64("\x1f", fnv1a64(context)));
    return q;
}

}  // namespace hpqa
