#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <future>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/random.hpp"
#include "cce/tokenize.hpp"

namespace cce {

inline double exact_match_accuracy(const std::vector<TokenSequence>& hypotheses,
                                   const std::vector<TokenSequence>& references) {
    if (hypotheses.size() != references.size())
        throw ValidationError("exact match: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                              std::to_string(references.size()) + " references");
    if (references.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < references.size(); ++i) hits += hypotheses[i] == references[i];
    return static_cast<double>(hits) / static_cast<double>(references.size());
}

// A prediction counts when any of its first k ranked candidates matches.
inline double exact_match_at_k(const std::vector<std::vector<TokenSequence>>& candidates,
                               const std::vector<TokenSequence>& references, std::size_t k) {
    if (candidates.size() != references.size())
        throw ValidationError("exact match: " + std::to_string(candidates.size()) + " candidate lists for " +
                              std::to_string(references.size()) + " references");
    if (references.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < references.size(); ++i) {
        const auto& c = candidates[i];
        const auto stop = c.begin() + static_cast<std::ptrdiff_t>(std::min(k, c.size()));
        hits += std::find(c.begin(), stop, references[i]) != stop;
    }
    return static_cast<double>(hits) / static_cast<double>(references.size());
}

// ---------------------------------------------------------------------------
// BLEU

struct BleuReport {
    double bleu = 0;  // 0..100
    std::array<double, 4> precisions{};
    std::array<std::size_t, 4> matches{};
    std::array<std::size_t, 4> totals{};
    double brevity_penalty = 0;
    std::size_t hypothesis_length = 0;
    std::size_t reference_length = 0;
};

inline void to_json(nlohmann::json& j, const BleuReport& r) {
    j = {{"bleu", r.bleu},
         {"precisions", r.precisions},
         {"matches", r.matches},
         {"totals", r.totals},
         {"brevity_penalty", r.brevity_penalty},
         {"hypothesis_length", r.hypothesis_length},
         {"reference_length", r.reference_length}};
}

// Corpus-level BLEU-4 without smoothing: clipped n-gram counts pooled over
// the corpus. An order with no hypothesis n-grams at all is left out of the
// geometric mean.
inline BleuReport corpus_bleu(const std::vector<TokenSequence>& hypotheses,
                              const std::vector<TokenSequence>& references) {
    if (hypotheses.empty()) throw ValidationError("BLEU over an empty corpus");
    if (hypotheses.size() != references.size())
        throw ValidationError("BLEU: " + std::to_string(hypotheses.size()) + " hypotheses for " +
                              std::to_string(references.size()) + " references");
    BleuReport r;
    for (std::size_t s = 0; s < hypotheses.size(); ++s) {
        const auto& hyp = hypotheses[s];
        const auto& ref = references[s];
        r.hypothesis_length += hyp.size();
        r.reference_length += ref.size();
        for (std::size_t n = 1; n <= 4; ++n) {
            if (hyp.size() < n) continue;
            std::map<std::vector<std::string>, std::size_t> ref_counts, hyp_counts;
            for (std::size_t i = 0; i + n <= ref.size(); ++i) ++ref_counts[{ref.begin() + i, ref.begin() + i + n}];
            for (std::size_t i = 0; i + n <= hyp.size(); ++i) ++hyp_counts[{hyp.begin() + i, hyp.begin() + i + n}];
            r.totals[n - 1] += hyp.size() - n + 1;
            for (const auto& [gram, count] : hyp_counts) {
                auto it = ref_counts.find(gram);
                if (it != ref_counts.end()) r.matches[n - 1] += std::min(count, it->second);
            }
        }
    }
    const double c = static_cast<double>(r.hypothesis_length);
    const double ref_len = static_cast<double>(r.reference_length);
    if (r.hypothesis_length == 0) {
        r.brevity_penalty = r.reference_length == 0 ? 1.0 : 0.0;
        r.bleu = 100.0 * r.brevity_penalty;
        return r;
    }
    r.brevity_penalty = c > ref_len ? 1.0 : std::exp(1.0 - ref_len / c);
    double log_sum = 0;
    std::size_t orders = 0;
    bool zero = false;
    for (std::size_t n = 0; n < 4; ++n) {
        if (r.totals[n] == 0) continue;
        r.precisions[n] = static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
        if (r.matches[n] == 0) zero = true;
        else log_sum += std::log(r.precisions[n]);
        ++orders;
    }
    r.bleu = zero ? 0.0 : 100.0 * r.brevity_penalty * std::exp(log_sum / static_cast<double>(orders));
    return r;
}

// ---------------------------------------------------------------------------
// Labeled-class edit transfer

struct ClassTransfer {
    std::string label;
    std::size_t members = 0;
    std::size_t representative = 0;  // index into the input list
    std::size_t attempts = 0;
    std::size_t matches_top1 = 0;
    std::size_t matches_topk = 0;
    bool skipped = false;
};

struct TransferReport {
    std::vector<ClassTransfer> classes;
    std::size_t k = 1;
    std::size_t attempts = 0;
    std::size_t matches_top1 = 0;
    std::size_t matches_topk = 0;
    std::size_t skipped_classes = 0;

    double accuracy_top1() const { return attempts ? static_cast<double>(matches_top1) / static_cast<double>(attempts) : 0.0; }
    double accuracy_topk() const { return attempts ? static_cast<double>(matches_topk) / static_cast<double>(attempts) : 0.0; }
    bool all_skipped() const { return !classes.empty() && skipped_classes == classes.size(); }
};

inline void to_json(nlohmann::json& j, const TransferReport& r) {
    nlohmann::json classes = nlohmann::json::array();
    for (const auto& c : r.classes)
        classes.push_back({{"label", c.label},
                           {"members", c.members},
                           {"representative", c.representative},
                           {"attempts", c.attempts},
                           {"matches_top1", c.matches_top1},
                           {"matches_topk", c.matches_topk},
                           {"skipped", c.skipped}});
    j = {{"classes", classes},
         {"k", r.k},
         {"attempts", r.attempts},
         {"matches_top1", r.matches_top1},
         {"matches_topk", r.matches_topk},
         {"accuracy_top1", r.accuracy_top1()},
         {"accuracy_topk", r.accuracy_topk()},
         {"skipped_classes", r.skipped_classes}};
}

// Anything that applies a representative's change to other code and returns
// ranked candidate outputs.
template <class P>
concept EditApplier = requires(const P& p, const CodeChange& representative, const TokenSequence& code) {
    { p(representative, code) } -> std::convertible_to<std::vector<TokenSequence>>;
};

// Per class (in label order): draw one representative with the seeded
// generator and apply its change to every other member's code. Classes with
// fewer than two members are skipped.
template <EditApplier P>
TransferReport transfer_eval(const std::vector<ChangePair>& labeled, const P& applier, std::uint64_t seed,
                             std::size_t k) {
    std::map<std::string, std::vector<std::size_t>> classes;
    for (std::size_t i = 0; i < labeled.size(); ++i) {
        if (!labeled[i].label) throw ValidationError("transfer evaluation needs labels; pair " + std::to_string(i) + " has none");
        classes[*labeled[i].label].push_back(i);
    }
    Rng rng(seed);
    TransferReport report;
    report.k = k;
    for (const auto& [label, members] : classes) {
        ClassTransfer ct;
        ct.label = label;
        ct.members = members.size();
        if (members.size() < 2) {
            ct.skipped = true;
            ++report.skipped_classes;
            report.classes.push_back(ct);
            continue;
        }
        ct.representative = members[rng.below(members.size())];
        const ChangePair& rep = labeled[ct.representative];
        const CodeChange donor{rep.before, rep.after};
        for (std::size_t idx : members) {
            if (idx == ct.representative) continue;
            const auto candidates = std::vector<TokenSequence>(applier(donor, labeled[idx].before));
            ++ct.attempts;
            if (!candidates.empty() && candidates.front() == labeled[idx].after) ++ct.matches_top1;
            const auto stop = candidates.begin() + static_cast<std::ptrdiff_t>(std::min(k, candidates.size()));
            if (std::find(candidates.begin(), stop, labeled[idx].after) != stop) ++ct.matches_topk;
        }
        report.attempts += ct.attempts;
        report.matches_top1 += ct.matches_top1;
        report.matches_topk += ct.matches_topk;
        report.classes.push_back(ct);
    }
    return report;
}

// ---------------------------------------------------------------------------
// Cross-validation

struct CrossValidation {
    std::vector<std::size_t> fold_of;  // fold index per item
    std::vector<double> metrics;       // per fold
    double mean = 0;
    double stddev = 0;  // population
};

// Seeded assignment into k folds of near-equal size (the first n % k folds
// get one extra item).
inline std::vector<std::size_t> assign_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k < 2) throw UsageError("cross-validation needs at least 2 folds");
    if (k > n) throw ValidationError("cannot make " + std::to_string(k) + " folds from " + std::to_string(n) + " items");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<std::size_t> fold_of(n);
    std::size_t pos = 0;
    for (std::size_t f = 0; f < k; ++f) {
        const std::size_t size = n / k + (f < n % k ? 1 : 0);
        for (std::size_t i = 0; i < size; ++i) fold_of[order[pos++]] = f;
    }
    return fold_of;
}

// For each fold: the other folds are split train/valid 8:1 and handed to
// `protocol(train, valid, test)` together with the held-out fold; it returns
// the fold's metric. With jobs > 1 folds run concurrently.
template <class Item, class Protocol>
CrossValidation cross_validate(const std::vector<Item>& data, std::size_t k, std::uint64_t seed, Protocol&& protocol,
                               std::size_t jobs = 1) {
    CrossValidation cv;
    cv.fold_of = assign_folds(data.size(), k, seed);
    auto run_fold = [&](std::size_t f) {
        std::vector<Item> rest, test;
        for (std::size_t i = 0; i < data.size(); ++i) (cv.fold_of[i] == f ? test : rest).push_back(data[i]);
        SplitSpec spec;
        spec.ratios = {8.0 / 9.0, 1.0 / 9.0, 0.0};
        spec.seed = derive_seed(seed, f);
        auto split = split_dataset(rest, spec);
        return static_cast<double>(protocol(split.train, split.valid, test));
    };
    cv.metrics.assign(k, 0.0);
    jobs = std::max<std::size_t>(1, jobs);
    for (std::size_t start = 0; start < k; start += jobs) {
        const std::size_t stop = std::min(k, start + jobs);
        if (jobs == 1) {
            cv.metrics[start] = run_fold(start);
            continue;
        }
        std::vector<std::future<double>> running;
        for (std::size_t f = start; f < stop; ++f) running.push_back(std::async(std::launch::async, run_fold, f));
        for (std::size_t f = start; f < stop; ++f) cv.metrics[f] = running[f - start].get();
    }
    cv.mean = std::accumulate(cv.metrics.begin(), cv.metrics.end(), 0.0) / static_cast<double>(k);
    double sq = 0;
    for (double m : cv.metrics) sq += (m - cv.mean) * (m - cv.mean);
    cv.stddev = std::sqrt(sq / static_cast<double>(k));
    return cv;
}

}  // namespace cce
