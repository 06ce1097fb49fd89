#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cce/corpus.hpp"
#include "cce/random.hpp"
#include "cce/tokenize.hpp"

// Generators for small canonicalized Java-like corpora with known change
// classes. Each class is one structural edit applied to an anchor statement;
// the surrounding method (context) and filler statements vary.
namespace cce::synthetic {

using Lines = std::vector<TokenSequence>;

struct ChangeClass {
    std::string_view label;
    std::vector<std::string_view> before;  // anchor lines
    std::vector<std::string_view> after;
    std::string_view message;
};

inline const std::vector<ChangeClass>& change_classes() {
    static const std::vector<ChangeClass> classes = {
        {"literal-return", {"return 0 ;"}, {"return 1 ;"}, "Return 1 instead of 0. Callers expect a count."},
        {"literal-flag", {"VARIABLE_5 = false ;"}, {"VARIABLE_5 = true ;"}, "Enable the flag by default."},
        {"guard-return",
         {"VARIABLE_1 . METHOD_3 ( ) ;"},
         {"if ( VARIABLE_1 == null ) return ;", "VARIABLE_1 . METHOD_3 ( ) ;"},
         "Add null check before call."},
        {"guard-throw",
         {"VARIABLE_2 . METHOD_4 ( ) ;"},
         {"if ( VARIABLE_2 == null ) throw new TYPE_2 ( ) ;", "VARIABLE_2 . METHOD_4 ( ) ;"},
         "Throw on null argument!\nFixes crash."},
        {"swap-operands",
         {"VARIABLE_3 = VARIABLE_1 - VARIABLE_2 ;"},
         {"VARIABLE_3 = VARIABLE_2 - VARIABLE_1 ;"},
         "Fix operand order in subtraction."},
        {"swap-arguments",
         {"METHOD_8 ( VARIABLE_6 , VARIABLE_7 ) ;"},
         {"METHOD_8 ( VARIABLE_7 , VARIABLE_6 ) ;"},
         "Swap arguments of call."},
        {"rename-method", {"VARIABLE_4 . METHOD_5 ( ) ;"}, {"VARIABLE_4 . METHOD_6 ( ) ;"}, "Rename called method."},
        {"rename-type", {"TYPE_3 VARIABLE_7 = null ;"}, {"TYPE_4 VARIABLE_7 = null ;"}, "Change declared type."},
    };
    return classes;
}

inline constexpr std::size_t kContexts = 2;

namespace detail {

inline TokenSequence words(std::string_view text) {
    TokenSequence out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto next = text.find(' ', pos);
        const auto stop = next == std::string_view::npos ? text.size() : next;
        if (stop > pos) out.emplace_back(text.substr(pos, stop - pos));
        pos = stop + 1;
    }
    return out;
}

inline TokenSequence filler(std::size_t context, Rng& rng) {
    static const std::array<std::array<std::string_view, 4>, kContexts> pools = {{
        {"VARIABLE_8 = # ;", "METHOD_7 ( VARIABLE_8 ) ;", "VARIABLE_9 += # ;", "if ( VARIABLE_8 > # ) VARIABLE_9 = # ;"},
        {"TYPE_6 VARIABLE_11 = new TYPE_6 ( # ) ;", "VARIABLE_11 . METHOD_10 ( # ) ;", "VARIABLE_10 . METHOD_11 ( ) ;",
         "while ( VARIABLE_12 < # ) VARIABLE_12 ++ ;"},
    }};
    TokenSequence line = words(pools[context][rng.below(4)]);
    for (auto& tok : line)
        if (tok == "#") tok = std::to_string(2 + rng.below(8));
    return line;
}

inline TokenSequence header(std::size_t context) {
    return context == 0 ? words("public void METHOD_1 ( ) {") : words("private int METHOD_1 ( TYPE_5 VARIABLE_10 ) {");
}

}  // namespace detail

struct Change {
    Lines before;
    Lines after;
    std::string label;
    std::string message;
};

// One instance of change class `cls` inside method context `context`.
inline Change make_change(std::size_t cls, std::size_t context, Rng& rng) {
    const ChangeClass& c = change_classes().at(cls);
    Lines prefix{detail::header(context % kContexts)};
    const std::size_t lead = 1 + rng.below(2);
    for (std::size_t i = 0; i < lead; ++i) prefix.push_back(detail::filler(context % kContexts, rng));
    Lines suffix;
    if (rng.below(2)) suffix.push_back(detail::filler(context % kContexts, rng));
    suffix.push_back({"}"});
    Change ch;
    ch.label = std::string(c.label);
    ch.message = std::string(c.message);
    ch.before = prefix;
    ch.after = prefix;
    for (auto line : c.before) ch.before.push_back(detail::words(line));
    for (auto line : c.after) ch.after.push_back(detail::words(line));
    ch.before.insert(ch.before.end(), suffix.begin(), suffix.end());
    ch.after.insert(ch.after.end(), suffix.begin(), suffix.end());
    return ch;
}

inline TokenSequence flatten(const Lines& lines) {
    TokenSequence out;
    for (const auto& l : lines) out.insert(out.end(), l.begin(), l.end());
    return out;
}

// Line-level LCS diff rendered as a marked token stream (see diff_marker).
inline TokenSequence render_diff(const Lines& before, const Lines& after) {
    const std::size_t n = before.size(), m = after.size();
    std::vector<std::vector<std::size_t>> lcs(n + 1, std::vector<std::size_t>(m + 1, 0));
    for (std::size_t i = n; i-- > 0;)
        for (std::size_t j = m; j-- > 0;)
            lcs[i][j] = before[i] == after[j] ? lcs[i + 1][j + 1] + 1 : std::max(lcs[i + 1][j], lcs[i][j + 1]);
    TokenSequence out;
    auto emit = [&](const std::string& marker, const TokenSequence& line) {
        out.push_back(marker);
        out.insert(out.end(), line.begin(), line.end());
    };
    std::size_t i = 0, j = 0;
    while (i < n || j < m) {
        if (i < n && j < m && before[i] == after[j]) {
            emit(diff_marker::kContext, before[i]);
            ++i, ++j;
        } else if (i < n && (j == m || lcs[i + 1][j] >= lcs[i][j + 1])) {
            emit(diff_marker::kRemoved, before[i++]);
        } else {
            emit(diff_marker::kAdded, after[j++]);
        }
    }
    return out;
}

inline ChangePair to_pair(const Change& c, bool with_label = true) {
    ChangePair p{flatten(c.before), flatten(c.after), std::nullopt};
    if (with_label) p.label = c.label;
    return p;
}

inline CommitSample to_commit(const Change& c) {
    return {render_diff(c.before, c.after), c.message, 1, false};
}

// Every class in every context, `per_context` instances each, labeled.
inline std::vector<ChangePair> transfer_benchmark(std::uint64_t seed, std::size_t per_context = 5) {
    Rng rng(seed);
    std::vector<ChangePair> out;
    for (std::size_t cls = 0; cls < change_classes().size(); ++cls)
        for (std::size_t ctx = 0; ctx < kContexts; ++ctx)
            for (std::size_t i = 0; i < per_context; ++i) out.push_back(to_pair(make_change(cls, ctx, rng)));
    return out;
}

inline std::vector<Change> random_changes(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Change> out;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t cls = rng.below(change_classes().size());
        out.push_back(make_change(cls, rng.below(kContexts), rng));
    }
    return out;
}

inline std::vector<ChangePair> change_corpus(std::size_t n, std::uint64_t seed) {
    std::vector<ChangePair> out;
    for (const auto& c : random_changes(n, seed)) out.push_back(to_pair(c, false));
    return out;
}

// Commits whose message is a fixed template of their change class.
inline std::vector<CommitSample> commit_corpus(std::size_t n, std::uint64_t seed) {
    std::vector<CommitSample> out;
    for (const auto& c : random_changes(n, seed)) out.push_back(to_commit(c));
    return out;
}

}  // namespace cce::synthetic
