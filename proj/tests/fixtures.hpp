#pragma once

// Small models and samples shared by the model, decode and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cce/decode.hpp"
#include "cce/model.hpp"
#include "cce/random.hpp"

namespace fixture {

inline cce::Vocabulary letters(std::size_t n) {
    std::vector<cce::TokenSequence> corpus(1);
    for (std::size_t i = 0; i < n; ++i) corpus[0].push_back(std::string(1, static_cast<char>('a' + i)));
    return cce::build_vocabulary(corpus);
}

inline cce::ModelConfig tiny_config(const cce::Vocabulary& vocab, std::uint64_t seed,
                                    cce::EditForm form = cce::EditForm::Compressed) {
    cce::ModelConfig c;
    c.vocab_size = c.output_vocab_size = vocab.size();
    c.token_dim = 3;
    c.action_dim = 2;
    c.encoder_hidden = 3;
    c.decoder_hidden = 4;
    c.edit_form = form;
    c.seed = seed;
    return c;
}

// Tokens drawn from the first `alphabet` letters; lengths in [1, max_len].
inline cce::TokenSequence random_code(cce::Rng& rng, std::size_t max_len, std::size_t alphabet) {
    cce::TokenSequence s(1 + rng.below(max_len));
    for (auto& t : s) t = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
    return s;
}

// Next-token distribution drawn from a generator seeded by the history, so
// equal prefixes always see equal distributions.
struct TableModel {
    using State = std::vector<int>;
    std::uint64_t seed;
    std::size_t vocab;

    State initial_state() const { return {}; }

    std::pair<std::vector<double>, State> step(const State& history, int token) const {
        State next = history;
        next.push_back(token);
        std::uint64_t h = seed;
        for (int t : next) h = cce::derive_seed(h, static_cast<std::uint64_t>(t + 7));
        cce::Rng rng(h);
        std::vector<double> w(vocab);
        double total = 0;
        for (auto& x : w) total += x = std::exp(3 * rng.uniform(-1, 1));
        for (auto& x : w) x = std::log(x / total);
        return {w, next};
    }
};

// Every path up to max_len: finished at EOS or cut at the length limit.
inline std::vector<cce::Hypothesis> enumerate(const TableModel& m, const cce::SearchConfig& cfg) {
    std::vector<cce::Hypothesis> out;
    std::function<void(const TableModel::State&, int, cce::Hypothesis)> walk = [&](const auto& state, int prev,
                                                                                   cce::Hypothesis h) {
        if (h.tokens.size() == cfg.max_len) {
            out.push_back(h);
            return;
        }
        const auto [logp, next] = m.step(state, prev);
        for (std::size_t tok = 0; tok < logp.size(); ++tok) {
            cce::Hypothesis g = h;
            g.score += logp[tok];
            if (static_cast<int>(tok) == cfg.eos) {
                g.finished = true;
                out.push_back(g);
            } else {
                g.tokens.push_back(static_cast<int>(tok));
                walk(next, static_cast<int>(tok), g);
            }
        }
    };
    walk(m.initial_state(), cfg.sos, {});
    std::sort(out.begin(), out.end(), cce::detail::ranks_before);
    return out;
}

}  // namespace fixture
