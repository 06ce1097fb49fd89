#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cce/error.hpp"
#include "cce/tokenize.hpp"

namespace cce {

enum class EditAction : unsigned char { Equal = 0, Replace = 1, Add = 2, Delete = 3 };

inline constexpr std::size_t kEditActionCount = 4;

// A one-sided column holds no token on the other side (the padding symbol).
struct EditColumn {
    EditAction action;
    std::optional<std::string> before;
    std::optional<std::string> after;

    friend bool operator==(const EditColumn&, const EditColumn&) = default;
};

enum class EditForm { Full, Compressed };

struct EditSequence {
    std::vector<EditColumn> columns;
    EditForm form = EditForm::Full;

    std::size_t size() const { return columns.size(); }
    bool empty() const { return columns.empty(); }

    friend bool operator==(const EditSequence&, const EditSequence&) = default;
};

class EditMismatchError : public ValidationError {
public:
    EditMismatchError(std::size_t column, const std::string& what)
        : ValidationError("edit column " + std::to_string(column) + ": " + what), column_(column) {}
    // 1-based column index of the first mismatch.
    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

namespace detail {

// Token equality that settles most mismatches without a library call.
inline bool same_token(const std::string& a, const std::string& b) {
    const std::size_t len = a.size();
    return len == b.size() &&
           (len == 0 || (a[0] == b[0] && std::char_traits<char>::compare(a.data() + 1, b.data() + 1, len - 1) == 0));
}

}  // namespace detail

// Unit-cost Levenshtein alignment. Traceback prefers EQUAL, then REPLACE,
// then DELETE, then ADD, so the alignment is unique.
inline EditSequence align(const TokenSequence& before, const TokenSequence& after) {
    const std::size_t n = before.size();
    const std::size_t m = after.size();
    const std::size_t w = m + 1;
    // Scratch: token ids local to this pair (so the table compares integers),
    // the first position of each distinct token, the cost table and the
    // traced path. Short inputs stay on the stack.
    const std::size_t need = 3 * (n + m) + (n + 1) * w + (n + m);
    std::array<std::uint32_t, 1024> local;
    std::vector<std::uint32_t> heap;
    if (need > local.size()) heap.resize(need);
    std::uint32_t* const id_before = need > local.size() ? heap.data() : local.data();
    std::uint32_t* const id_after = id_before + n;
    std::uint32_t* const first = id_after + m;
    std::uint32_t* const cost = first + n + m;
    std::uint32_t* const path = cost + (n + 1) * w;
    std::uint32_t distinct = 0;
    auto intern = [&](const std::string& tok, std::uint32_t at) {
        for (std::uint32_t k = 0; k < distinct; ++k) {
            const std::uint32_t f = first[k];
            if (detail::same_token(f < m ? after[f] : before[f - m], tok)) return k;
        }
        first[distinct] = at;
        return distinct++;
    };
    for (std::size_t j = 0; j < m; ++j) id_after[j] = intern(after[j], static_cast<std::uint32_t>(j));
    for (std::size_t i = 0; i < n; ++i) id_before[i] = intern(before[i], static_cast<std::uint32_t>(m + i));

    for (std::size_t i = 0; i <= n; ++i) cost[i * w] = static_cast<std::uint32_t>(i);
    for (std::size_t j = 0; j <= m; ++j) cost[j] = static_cast<std::uint32_t>(j);
    for (std::size_t i = 1; i <= n; ++i) {
        const std::uint32_t* up = cost + (i - 1) * w;
        std::uint32_t* row = cost + i * w;
        const std::uint32_t b = id_before[i - 1];
        std::uint32_t left = row[0];
        for (std::size_t j = 1; j <= m; ++j) {
            const std::uint32_t diag = up[j - 1] + (b == id_after[j - 1] ? 0 : 1);
            left = std::min(diag, std::min(up[j], left) + 1);
            row[j] = left;
        }
    }

    // Trace back from the end, then build the columns front to back.
    std::size_t steps = 0;
    std::size_t i = n;
    std::size_t j = m;
    while (i > 0 || j > 0) {
        const std::uint32_t here = cost[i * w + j];
        EditAction action = EditAction::Add;
        if (i > 0 && j > 0 && id_before[i - 1] == id_after[j - 1] && here == cost[(i - 1) * w + j - 1])
            action = EditAction::Equal;
        else if (i > 0 && j > 0 && id_before[i - 1] != id_after[j - 1] && here == cost[(i - 1) * w + j - 1] + 1)
            action = EditAction::Replace;
        else if (i > 0 && here == cost[(i - 1) * w + j] + 1)
            action = EditAction::Delete;
        path[steps++] = static_cast<std::uint32_t>(action);
        if (action != EditAction::Add) --i;
        if (action != EditAction::Delete) --j;
    }

    EditSequence seq;
    seq.columns.reserve(steps);
    while (steps > 0) {
        const auto action = static_cast<EditAction>(path[--steps]);
        switch (action) {
            case EditAction::Equal:
            case EditAction::Replace: seq.columns.emplace_back(action, before[i++], after[j++]); break;
            case EditAction::Delete: seq.columns.emplace_back(action, before[i++], std::nullopt); break;
            case EditAction::Add: seq.columns.emplace_back(action, std::nullopt, after[j++]); break;
        }
    }
    return seq;
}

inline std::size_t count_changes(const EditSequence& seq) {
    return static_cast<std::size_t>(std::count_if(seq.columns.begin(), seq.columns.end(),
                                                  [](const EditColumn& c) { return c.action != EditAction::Equal; }));
}

// Drops unchanged columns.
inline EditSequence compress(const EditSequence& seq) {
    if (seq.form != EditForm::Full) throw UsageError("compress expects a FULL edit sequence");
    EditSequence out;
    out.form = EditForm::Compressed;
    for (const auto& c : seq.columns)
        if (c.action != EditAction::Equal) out.columns.push_back(c);
    return out;
}

inline TokenSequence project_before(const EditSequence& seq) {
    TokenSequence out;
    for (const auto& c : seq.columns)
        if (c.before) out.push_back(*c.before);
    return out;
}

inline TokenSequence project_after(const EditSequence& seq) {
    TokenSequence out;
    for (const auto& c : seq.columns)
        if (c.after) out.push_back(*c.after);
    return out;
}

// Deterministic replay of a FULL edit sequence on the code it was built from.
inline TokenSequence apply_edit(const TokenSequence& before, const EditSequence& seq) {
    if (seq.form != EditForm::Full) throw UsageError("apply_edit needs a FULL edit sequence");
    TokenSequence out;
    out.reserve(seq.columns.size());
    std::size_t pos = 0;
    for (std::size_t col = 0; col < seq.columns.size(); ++col) {
        const auto& c = seq.columns[col];
        if (c.before) {
            if (pos >= before.size())
                throw EditMismatchError(col + 1, "edit consumes more tokens than the input has");
            if (!detail::same_token(before[pos], *c.before))
                throw EditMismatchError(col + 1, "expected '" + *c.before + "', found '" + before[pos] + "'");
            ++pos;
        }
        switch (c.action) {
            case EditAction::Equal: out.push_back(*c.before); break;
            case EditAction::Replace:
            case EditAction::Add: out.push_back(*c.after); break;
            case EditAction::Delete: break;
        }
    }
    if (pos != before.size())
        throw EditMismatchError(seq.columns.size() + 1, "input has tokens the edit does not cover");
    return out;
}

inline std::string_view action_symbol(EditAction a) {
    switch (a) {
        case EditAction::Equal: return "=";
        case EditAction::Replace: return "<->";
        case EditAction::Add: return "+";
        case EditAction::Delete: return "-";
    }
    return "?";
}

// One column per line: action<TAB>before<TAB>after, padding spelled <EMPTY>.
inline void render(std::ostream& os, const EditSequence& seq) {
    const std::string_view empty = special::kNames[special::kEmpty];
    for (const auto& c : seq.columns) {
        os << action_symbol(c.action) << '\t';
        if (c.before) os << *c.before; else os << empty;
        os << '\t';
        if (c.after) os << *c.after; else os << empty;
        os << '\n';
    }
}

inline std::string render(const EditSequence& seq) {
    std::ostringstream os;
    render(os, seq);
    return os.str();
}

}  // namespace cce
