#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cce/error.hpp"

namespace cce {

using TokenSequence = std::vector<std::string>;
using IdSequence = std::vector<int>;

// Splits on whitespace; every ASCII punctuation character except '_' and '$'
// becomes its own single-character token. Bytes >= 0x80 count as word
// characters so UTF-8 identifiers stay intact.
inline TokenSequence tokenize_code(std::string_view text) {
    TokenSequence out;
    std::string current;
    auto flush = [&] {
        if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    };
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (c < 0x80 && std::ispunct(c) && c != '_' && c != '$') {
            flush();
            out.emplace_back(1, ch);
        } else {
            current.push_back(ch);
        }
    }
    flush();
    return out;
}

// ---------------------------------------------------------------------------
// Canonicalization

enum class IdentifierKind { None, Variable, Type, Method };

inline const char* category_name(IdentifierKind kind) {
    switch (kind) {
        case IdentifierKind::Variable: return "VARIABLE";
        case IdentifierKind::Type: return "TYPE";
        case IdentifierKind::Method: return "METHOD";
        case IdentifierKind::None: break;
    }
    return "";
}

// Classifies the token at `index` given its whole sequence.
using IdentifierClassifier = std::function<IdentifierKind(std::span<const std::string>, std::size_t)>;

inline bool is_java_keyword_or_literal(std::string_view tok) {
    static const std::unordered_set<std::string_view> words = {
        "abstract", "assert",  "boolean",   "break",     "byte",       "case",      "catch",
        "char",     "class",   "const",     "continue",  "default",    "do",        "double",
        "else",     "enum",    "extends",   "final",     "finally",    "float",     "for",
        "goto",     "if",      "implements", "import",   "instanceof", "int",       "interface",
        "long",     "native",  "new",       "package",   "private",    "protected", "public",
        "return",   "short",   "static",    "strictfp",  "super",      "switch",    "synchronized",
        "this",     "throw",   "throws",    "transient", "try",        "void",      "volatile",
        "while",    "var",     "true",      "false",     "null"};
    return words.contains(tok);
}

inline bool is_identifier(std::string_view tok) {
    if (tok.empty()) return false;
    const auto first = static_cast<unsigned char>(tok.front());
    if (!(std::isalpha(first) || first == '_' || first == '$' || first >= 0x80)) return false;
    return std::all_of(tok.begin(), tok.end(), [](char ch) {
        const auto c = static_cast<unsigned char>(ch);
        return std::isalnum(c) || c == '_' || c == '$' || c >= 0x80;
    });
}

// Fixture-grade heuristic: capitalized identifiers are types, identifiers
// followed by '(' are methods, other identifiers are variables. Keywords and
// literals are never canonicalized.
inline IdentifierKind heuristic_classifier(std::span<const std::string> seq, std::size_t index) {
    const std::string& tok = seq[index];
    if (!is_identifier(tok) || is_java_keyword_or_literal(tok)) return IdentifierKind::None;
    if (std::isupper(static_cast<unsigned char>(tok.front()))) return IdentifierKind::Type;
    if (index + 1 < seq.size() && seq[index + 1] == "(") return IdentifierKind::Method;
    return IdentifierKind::Variable;
}

struct CanonicalMap {
    // original -> generic, in order of first occurrence.
    std::vector<std::pair<std::string, std::string>> entries;
    std::size_t variables = 0;
    std::size_t types = 0;
    std::size_t methods = 0;

    const std::string* generic_for(const std::string& original) const {
        for (const auto& [orig, gen] : entries)
            if (orig == original) return &gen;
        return nullptr;
    }
};

struct CanonicalPair {
    TokenSequence before;
    TokenSequence after;
    CanonicalMap map;
};

// Renames identifiers in both versions with one shared map; numbering follows
// first occurrence scanning `before` and then `after`.
inline CanonicalPair canonicalize_pair(const TokenSequence& before, const TokenSequence& after,
                                       const IdentifierClassifier& classify = heuristic_classifier) {
    CanonicalPair result;
    std::unordered_map<std::string, std::string> lookup;
    auto rewrite = [&](const TokenSequence& seq) {
        TokenSequence out;
        out.reserve(seq.size());
        for (std::size_t i = 0; i < seq.size(); ++i) {
            const std::string& tok = seq[i];
            if (auto it = lookup.find(tok); it != lookup.end()) {
                out.push_back(it->second);
                continue;
            }
            const IdentifierKind kind = classify(seq, i);
            if (kind == IdentifierKind::None) {
                out.push_back(tok);
                continue;
            }
            std::size_t* counter = kind == IdentifierKind::Variable ? &result.map.variables
                                   : kind == IdentifierKind::Type   ? &result.map.types
                                                                    : &result.map.methods;
            std::string generic = std::string(category_name(kind)) + "_" + std::to_string(++*counter);
            lookup.emplace(tok, generic);
            result.map.entries.emplace_back(tok, generic);
            out.push_back(std::move(generic));
        }
        return out;
    };
    result.before = rewrite(before);
    result.after = rewrite(after);
    return result;
}

inline TokenSequence decanonicalize(const TokenSequence& seq, const CanonicalMap& map) {
    std::unordered_map<std::string, std::string> inverse;
    for (const auto& [orig, gen] : map.entries) inverse.emplace(gen, orig);
    TokenSequence out;
    out.reserve(seq.size());
    for (const auto& tok : seq) {
        auto it = inverse.find(tok);
        out.push_back(it == inverse.end() ? tok : it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Vocabulary

namespace special {
inline constexpr int kPad = 0;
inline constexpr int kSos = 1;
inline constexpr int kEos = 2;
inline constexpr int kUnk = 3;
inline constexpr int kEmpty = 4;  // padding symbol for one-sided edit columns
inline constexpr int kEqual = 5;
inline constexpr int kReplace = 6;
inline constexpr int kAdd = 7;
inline constexpr int kDelete = 8;
inline constexpr int kCount = 9;

inline constexpr std::array<std::string_view, kCount> kNames = {
    "<PAD>", "<SOS>", "<EOS>", "<UNK>", "<EMPTY>", "<EQUAL>", "<REPLACE>", "<ADD>", "<DELETE>"};
}  // namespace special

inline constexpr std::size_t kDefaultVocabCap = 20000;
inline constexpr std::string_view kVocabHeader = "# cce-vocab v1";

class Vocabulary {
public:
    // Reserved symbols only.
    Vocabulary() {
        for (auto name : special::kNames) push(std::string(name));
    }

    std::size_t size() const { return id_to_token_.size(); }

    bool contains(const std::string& token) const { return token_to_id_.contains(token); }

    int id(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? special::kUnk : it->second;
    }

    // Returns -1 when absent.
    int find(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? -1 : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size())
            throw ValidationError("token id " + std::to_string(id) + " out of range for vocabulary of size " +
                                  std::to_string(id_to_token_.size()));
        return id_to_token_[static_cast<std::size_t>(id)];
    }

    static bool is_reserved(int id) { return id >= 0 && id < special::kCount; }

    const std::vector<std::string>& tokens() const { return id_to_token_; }

    void add(const std::string& token) {
        if (!contains(token)) push(token);
    }

    void save(std::ostream& os) const {
        os << kVocabHeader << '\n';
        for (const auto& tok : id_to_token_) {
            if (tok.find('\n') != std::string::npos || tok.find('\r') != std::string::npos)
                throw ValidationError("vocabulary token contains a line break");
            os << tok << '\n';
        }
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw DataError("cannot write vocabulary file " + path);
        save(os);
    }

    static Vocabulary load(std::istream& is) {
        std::string line;
        if (!std::getline(is, line) || line != kVocabHeader)
            throw FormatError("vocabulary file does not start with '" + std::string(kVocabHeader) + "'");
        Vocabulary vocab;
        std::size_t index = 0;
        while (std::getline(is, line)) {
            if (index < static_cast<std::size_t>(special::kCount)) {
                if (line != special::kNames[index])
                    throw FormatError("vocabulary reserved symbol mismatch at id " + std::to_string(index));
            } else {
                if (vocab.contains(line)) throw FormatError("duplicate vocabulary token '" + line + "'");
                vocab.push(line);
            }
            ++index;
        }
        if (index < static_cast<std::size_t>(special::kCount))
            throw FormatError("vocabulary file is missing reserved symbols");
        return vocab;
    }

    static Vocabulary load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw DataError("cannot read vocabulary file " + path);
        return load(is);
    }

    friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.id_to_token_ == b.id_to_token_; }

private:
    void push(std::string token) {
        token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
        id_to_token_.push_back(std::move(token));
    }

    std::unordered_map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Admits tokens by descending frequency, ties broken lexicographically, until
// the vocabulary reaches `cap` entries (reserved symbols included).
inline Vocabulary build_vocabulary(std::span<const TokenSequence> corpus, std::size_t cap = kDefaultVocabCap,
                                   std::size_t min_freq = 1) {
    if (cap <= static_cast<std::size_t>(special::kCount))
        throw UsageError("vocabulary cap must exceed the " + std::to_string(special::kCount) + " reserved symbols");
    std::map<std::string, std::size_t> counts;
    for (const auto& seq : corpus)
        for (const auto& tok : seq) ++counts[tok];
    std::vector<std::pair<std::string, std::size_t>> ranked;
    for (auto& [tok, n] : counts) {
        const bool reserved = std::find(special::kNames.begin(), special::kNames.end(), tok) != special::kNames.end();
        if (n >= min_freq && !reserved) ranked.emplace_back(tok, n);
    }
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary vocab;
    for (const auto& entry : ranked) {
        if (vocab.size() >= cap) break;
        vocab.add(entry.first);
    }
    return vocab;
}

inline Vocabulary build_vocabulary(const std::vector<TokenSequence>& corpus, std::size_t cap = kDefaultVocabCap,
                                   std::size_t min_freq = 1) {
    return build_vocabulary(std::span<const TokenSequence>(corpus), cap, min_freq);
}

inline IdSequence encode(const TokenSequence& seq, const Vocabulary& vocab) {
    IdSequence ids;
    ids.reserve(seq.size());
    for (const auto& tok : seq) ids.push_back(vocab.id(tok));
    return ids;
}

// Reserved ids other than UNK are dropped; UNK prints as "<UNK>".
inline TokenSequence decode(std::span<const int> ids, const Vocabulary& vocab) {
    TokenSequence out;
    out.reserve(ids.size());
    for (int id : ids) {
        const std::string& tok = vocab.token(id);
        if (Vocabulary::is_reserved(id) && id != special::kUnk) continue;
        out.push_back(tok);
    }
    return out;
}

inline TokenSequence decode(const IdSequence& ids, const Vocabulary& vocab) {
    return decode(std::span<const int>(ids), vocab);
}

}  // namespace cce
