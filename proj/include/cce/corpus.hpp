#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cce/error.hpp"
#include "cce/random.hpp"
#include "cce/tokenize.hpp"

namespace cce {

struct ChangePair {
    TokenSequence before;
    TokenSequence after;
    std::optional<std::string> label;

    friend bool operator==(const ChangePair&, const ChangePair&) = default;
};

// A change with no label attached. Pre-training consumes only these, so it
// cannot look at change classes.
struct CodeChange {
    TokenSequence before;
    TokenSequence after;

    friend bool operator==(const CodeChange&, const CodeChange&) = default;
};

inline std::vector<CodeChange> strip_labels(const std::vector<ChangePair>& pairs) {
    std::vector<CodeChange> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back({p.before, p.after});
    return out;
}

struct CommitSample {
    TokenSequence diff_tokens;
    std::string message;
    std::size_t files_changed = 1;
    bool whole_file_change = false;

    friend bool operator==(const CommitSample&, const CommitSample&) = default;
};

namespace detail {

template <class Handler>
void for_each_jsonl_record(std::istream& is, Handler&& handle) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        nlohmann::json record;
        try {
            record = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw ParseError(line_no, std::string("malformed JSON record: ") + e.what());
        }
        if (!record.is_object()) throw ParseError(line_no, "record is not a JSON object");
        handle(record, line_no);
    }
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path);
    return is;
}

inline TokenSequence token_array(const nlohmann::json& record, const char* field, std::size_t line_no) {
    if (!record.contains(field)) throw SchemaError(line_no, std::string("missing field '") + field + "'");
    const auto& arr = record.at(field);
    if (!arr.is_array()) throw SchemaError(line_no, std::string("field '") + field + "' must be an array of strings");
    TokenSequence out;
    out.reserve(arr.size());
    for (const auto& tok : arr) {
        if (!tok.is_string()) throw SchemaError(line_no, std::string("field '") + field + "' must contain strings");
        out.push_back(tok.get<std::string>());
    }
    return out;
}

}  // namespace detail

inline std::vector<ChangePair> load_change_pairs(std::istream& is) {
    std::vector<ChangePair> pairs;
    detail::for_each_jsonl_record(is, [&](const nlohmann::json& rec, std::size_t line_no) {
        ChangePair pair;
        pair.before = detail::token_array(rec, "before", line_no);
        pair.after = detail::token_array(rec, "after", line_no);
        if (rec.contains("label") && !rec.at("label").is_null()) {
            if (!rec.at("label").is_string()) throw SchemaError(line_no, "field 'label' must be a string");
            pair.label = rec.at("label").get<std::string>();
            if (pair.label->empty()) throw SchemaError(line_no, "field 'label' must be non-empty");
        }
        pairs.push_back(std::move(pair));
    });
    return pairs;
}

inline std::vector<ChangePair> load_change_pairs(const std::string& path) {
    auto is = detail::open_input(path);
    return load_change_pairs(is);
}

inline std::vector<CommitSample> load_commit_samples(std::istream& is) {
    std::vector<CommitSample> samples;
    detail::for_each_jsonl_record(is, [&](const nlohmann::json& rec, std::size_t line_no) {
        CommitSample s;
        s.diff_tokens = detail::token_array(rec, "diff_tokens", line_no);
        for (const char* field : {"message", "files_changed", "whole_file_change"})
            if (!rec.contains(field)) throw SchemaError(line_no, std::string("missing field '") + field + "'");
        if (!rec.at("message").is_string()) throw SchemaError(line_no, "field 'message' must be a string");
        if (!rec.at("files_changed").is_number_integer())
            throw SchemaError(line_no, "field 'files_changed' must be an integer");
        if (!rec.at("whole_file_change").is_boolean())
            throw SchemaError(line_no, "field 'whole_file_change' must be a boolean");
        s.message = rec.at("message").get<std::string>();
        const auto files = rec.at("files_changed").get<std::int64_t>();
        if (files < 1)
            throw ValidationError("line " + std::to_string(line_no) + ": files_changed must be >= 1, got " +
                                  std::to_string(files));
        s.files_changed = static_cast<std::size_t>(files);
        s.whole_file_change = rec.at("whole_file_change").get<bool>();
        if (s.diff_tokens.empty()) throw SchemaError(line_no, "diff_tokens must be non-empty");
        samples.push_back(std::move(s));
    });
    return samples;
}

inline std::vector<CommitSample> load_commit_samples(const std::string& path) {
    auto is = detail::open_input(path);
    return load_commit_samples(is);
}

inline nlohmann::json to_json(const ChangePair& p) {
    nlohmann::json j{{"before", p.before}, {"after", p.after}};
    if (p.label) j["label"] = *p.label;
    return j;
}

inline nlohmann::json to_json(const CommitSample& s) {
    return {{"diff_tokens", s.diff_tokens},
            {"message", s.message},
            {"files_changed", s.files_changed},
            {"whole_file_change", s.whole_file_change}};
}

template <class Record>
void write_jsonl(std::ostream& os, const std::vector<Record>& records) {
    for (const auto& r : records) os << to_json(r).dump() << '\n';
}

template <class Record>
void write_jsonl(const std::string& path, const std::vector<Record>& records) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path);
    write_jsonl(os, records);
}

// ---------------------------------------------------------------------------
// Filtering

struct FilterRules {
    bool drop_whole_file = false;
    bool drop_multi_file = false;
    std::optional<std::size_t> min_diff_tokens;  // inclusive
    std::optional<std::size_t> max_diff_tokens;  // inclusive
    // Messages must have strictly fewer tokens than this.
    std::optional<std::size_t> message_token_limit;
    bool dedupe = false;

    // The commit-message corpus rules: whole-file and multi-file commits
    // removed, diffs of 50..100 tokens, messages under 30 tokens, no duplicates.
    static FilterRules filtered_commits() {
        return {true, true, 50, 100, 30, true};
    }
};

inline std::vector<CommitSample> filter_commits(const std::vector<CommitSample>& samples, const FilterRules& rules) {
    std::vector<CommitSample> out;
    std::set<std::pair<TokenSequence, std::string>> seen;
    for (const auto& s : samples) {
        if (rules.drop_whole_file && s.whole_file_change) continue;
        if (rules.drop_multi_file && s.files_changed > 1) continue;
        if (rules.min_diff_tokens && s.diff_tokens.size() < *rules.min_diff_tokens) continue;
        if (rules.max_diff_tokens && s.diff_tokens.size() > *rules.max_diff_tokens) continue;
        if (rules.message_token_limit && tokenize_code(s.message).size() >= *rules.message_token_limit) continue;
        if (rules.dedupe && !seen.emplace(s.diff_tokens, s.message).second) continue;
        out.push_back(s);
    }
    return out;
}

inline std::vector<ChangePair> filter_change_pairs(const std::vector<ChangePair>& pairs, std::size_t max_len) {
    if (max_len < 1) throw UsageError("max_len must be >= 1");
    std::vector<ChangePair> out;
    for (const auto& p : pairs)
        if (p.before.size() <= max_len && p.after.size() <= max_len) out.push_back(p);
    return out;
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
    std::array<double, 3> ratios{0.8, 0.1, 0.1};
    std::uint64_t seed = 13;

    void validate() const {
        for (double r : ratios)
            if (!(r >= 0.0)) throw ValidationError("split ratios must be non-negative");
        const double sum = ratios[0] + ratios[1] + ratios[2];
        if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("split ratios must sum to 1");
    }
};

template <class Item>
struct Split {
    std::vector<Item> train;
    std::vector<Item> valid;
    std::vector<Item> test;
};

// Seeded shuffle, then floor-allocated valid/test sizes; the remainder goes to
// train.
inline Split<std::size_t> split_indices(std::size_t n, const SplitSpec& spec) {
    spec.validate();
    const bool all_positive = spec.ratios[0] > 0 && spec.ratios[1] > 0 && spec.ratios[2] > 0;
    if (all_positive && n < 3)
        throw ValidationError("cannot split " + std::to_string(n) + " items three ways");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(spec.seed);
    rng.shuffle(order);
    const auto valid_n = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.ratios[1] + 1e-9));
    const auto test_n = static_cast<std::size_t>(std::floor(static_cast<double>(n) * spec.ratios[2] + 1e-9));
    Split<std::size_t> s;
    const std::size_t train_n = n - valid_n - test_n;
    s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(train_n));
    s.valid.assign(order.begin() + static_cast<std::ptrdiff_t>(train_n),
                   order.begin() + static_cast<std::ptrdiff_t>(train_n + valid_n));
    s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(train_n + valid_n), order.end());
    return s;
}

template <class Item>
Split<Item> split_dataset(const std::vector<Item>& items, const SplitSpec& spec) {
    const auto idx = split_indices(items.size(), spec);
    Split<Item> out;
    for (auto i : idx.train) out.train.push_back(items[i]);
    for (auto i : idx.valid) out.valid.push_back(items[i]);
    for (auto i : idx.test) out.test.push_back(items[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Messages and diffs

// Prefix up to the earliest sentence end: a newline (not kept), or one of
// '.', '!', '?' (kept) that is followed by whitespace or the end of the text.
// "v1.2" therefore does not end a sentence. Surrounding whitespace is trimmed.
inline std::string first_sentence(const std::string& message) {
    constexpr const char* kSpace = " \t\r\n\f\v";
    const auto begin = message.find_first_not_of(kSpace);
    if (begin == std::string::npos) throw ValidationError("commit message is empty");
    std::size_t end = message.size();
    for (std::size_t i = begin; i < message.size(); ++i) {
        const char c = message[i];
        if (c == '\n') {
            end = i;
            break;
        }
        if ((c == '.' || c == '!' || c == '?') &&
            (i + 1 == message.size() || std::isspace(static_cast<unsigned char>(message[i + 1])))) {
            end = i + 1;
            break;
        }
    }
    std::string out = message.substr(begin, end - begin);
    return out.substr(0, out.find_last_not_of(kSpace) + 1);
}

// Line markers of the synthetic unified-diff token stream. Every line starts
// with one marker; file headers may precede them.
namespace diff_marker {
inline const std::string kContext = "<ctx>";
inline const std::string kRemoved = "<del>";
inline const std::string kAdded = "<add>";
inline const std::string kNewFile = "<new-file>";
inline const std::string kDeletedFile = "<deleted-file>";
}  // namespace diff_marker

struct DiffReconstruction {
    ChangePair pair;
    // A whole file was added or deleted: one side has no code.
    bool whole_file_change = false;
};

inline DiffReconstruction diff_to_pair(const TokenSequence& diff_tokens) {
    enum class Line { None, Context, Removed, Added } mode = Line::None;
    DiffReconstruction r;
    bool file_header = false;
    for (std::size_t i = 0; i < diff_tokens.size(); ++i) {
        const auto& tok = diff_tokens[i];
        if (tok == diff_marker::kContext) {
            mode = Line::Context;
        } else if (tok == diff_marker::kRemoved) {
            mode = Line::Removed;
        } else if (tok == diff_marker::kAdded) {
            mode = Line::Added;
        } else if (tok == diff_marker::kNewFile || tok == diff_marker::kDeletedFile) {
            file_header = true;
            mode = Line::None;
        } else {
            switch (mode) {
                case Line::None:
                    throw FormatError("diff token " + std::to_string(i) + " ('" + tok +
                                      "') does not belong to a context, removed or added line");
                case Line::Context:
                    r.pair.before.push_back(tok);
                    r.pair.after.push_back(tok);
                    break;
                case Line::Removed: r.pair.before.push_back(tok); break;
                case Line::Added: r.pair.after.push_back(tok); break;
            }
        }
    }
    r.whole_file_change = file_header || r.pair.before.empty() || r.pair.after.empty();
    return r;
}

}  // namespace cce
