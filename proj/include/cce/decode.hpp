#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "cce/error.hpp"
#include "cce/model.hpp"
#include "cce/nn.hpp"
#include "cce/tokenize.hpp"

namespace cce {

// Anything that yields next-token log-probabilities from a decoding state.
template <class M>
concept StepModel = requires(const M& m, const typename M::State& s, int token) {
    { m.initial_state() } -> std::convertible_to<typename M::State>;
    { m.step(s, token) } -> std::convertible_to<std::pair<std::vector<double>, typename M::State>>;
};

struct SearchConfig {
    std::size_t width = 50;
    std::size_t max_len = 50;  // generated tokens, EOS included
    int sos = special::kSos;
    int eos = special::kEos;
};

struct Hypothesis {
    std::vector<int> tokens;  // EOS stripped
    double score = 0;         // accumulated log-probability
    bool finished = false;    // ended with EOS (false: cut at max_len)

    friend bool operator==(const Hypothesis&, const Hypothesis&) = default;
};

namespace detail {

// Best first: higher score, then shorter, then lexicographically smaller ids.
inline bool ranks_before(const Hypothesis& a, const Hypothesis& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tokens.size() != b.tokens.size()) return a.tokens.size() < b.tokens.size();
    return a.tokens < b.tokens;
}

}  // namespace detail

template <StepModel M>
std::vector<int> greedy_decode(const M& model, const SearchConfig& cfg) {
    if (cfg.max_len < 1) throw UsageError("max_len must be >= 1");
    std::vector<int> out;
    auto state = model.initial_state();
    int prev = cfg.sos;
    for (std::size_t t = 0; t < cfg.max_len; ++t) {
        auto [logp, next] = model.step(state, prev);
        std::size_t best = 0;
        for (std::size_t i = 1; i < logp.size(); ++i)
            if (logp[i] > logp[best]) best = i;
        if (static_cast<int>(best) == cfg.eos) break;
        out.push_back(static_cast<int>(best));
        state = std::move(next);
        prev = static_cast<int>(best);
    }
    return out;
}

// Keeps the `width - finished` best expansions per step; a hypothesis that
// emits EOS is retired and competes on its total log-probability. Hypotheses
// alive at max_len are returned unfinished.
template <StepModel M>
std::vector<Hypothesis> beam_search(const M& model, const SearchConfig& cfg) {
    if (cfg.width < 1) throw UsageError("beam width must be >= 1");
    if (cfg.max_len < 1) throw UsageError("max_len must be >= 1");
    struct Live {
        Hypothesis hyp;
        typename M::State state;
        int last;
    };
    struct Candidate {
        std::size_t parent;
        int token;
        Hypothesis hyp;
    };
    std::vector<Live> live;
    live.push_back({Hypothesis{}, model.initial_state(), cfg.sos});
    std::vector<Hypothesis> done;

    for (std::size_t t = 0; t < cfg.max_len && !live.empty() && done.size() < cfg.width; ++t) {
        std::vector<Candidate> candidates;
        std::vector<typename M::State> next_states;
        next_states.reserve(live.size());
        for (std::size_t p = 0; p < live.size(); ++p) {
            auto [logp, next] = model.step(live[p].state, live[p].last);
            next_states.push_back(std::move(next));
            for (std::size_t tok = 0; tok < logp.size(); ++tok) {
                if (logp[tok] == -std::numeric_limits<double>::infinity()) continue;
                Candidate c{p, static_cast<int>(tok), live[p].hyp};
                c.hyp.tokens.push_back(static_cast<int>(tok));
                c.hyp.score += logp[tok];
                candidates.push_back(std::move(c));
            }
        }
        const std::size_t slots = std::min(cfg.width - done.size(), candidates.size());
        std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(slots),
                          candidates.end(),
                          [](const Candidate& a, const Candidate& b) { return detail::ranks_before(a.hyp, b.hyp); });
        std::vector<Live> next_live;
        for (std::size_t i = 0; i < slots; ++i) {
            Candidate& c = candidates[i];
            if (c.token == cfg.eos) {
                c.hyp.tokens.pop_back();
                c.hyp.finished = true;
                done.push_back(std::move(c.hyp));
            } else {
                next_live.push_back({std::move(c.hyp), next_states[c.parent], c.token});
            }
        }
        live = std::move(next_live);
    }
    for (auto& l : live) done.push_back(std::move(l.hyp));
    std::sort(done.begin(), done.end(), detail::ranks_before);
    if (done.size() > cfg.width) done.resize(cfg.width);
    return done;
}

// ---------------------------------------------------------------------------
// Neural model adapter

// Decodes over an extended vocabulary: ids below the output vocabulary size
// are generated tokens; the rest are source tokens the vocabulary lacks,
// reachable only by copying. Probabilities of equal tokens are merged.
template <class T>
class ModelStepper {
public:
    struct State {
        nn::Tensor<T> hidden;
        nn::Tensor<T> cell;
    };

    ModelStepper(const CodeChangeEmbedder<T>& model, const Vocabulary& code_vocab, const Vocabulary& output_vocab,
                 const TokenSequence& source, nn::Tensor<T> edit_vector)
        : model_(model), output_vocab_(output_vocab), edit_(std::move(edit_vector)) {
        if (edit_.size() != model.config().edit_dim())
            throw ValidationError("edit vector has dimension " + std::to_string(edit_.size()) + ", model expects " +
                                  std::to_string(model.config().edit_dim()));
        nn::Tape<T> tape(&model.params(), false);
        const auto enc = model.encode_code(tape, encode(source, code_vocab));
        states_ = tape.value(enc.states);
        states_t_ = tape.value(enc.states_t);
        const auto init = model.init_decoder_state(tape, enc.summary, tape.constant(edit_));
        initial_ = {tape.value(init.hidden), tape.value(init.cell)};

        const std::size_t vocab = output_vocab.size();
        for (const auto& tok : source) {
            const int id = output_vocab.find(tok);
            if (id >= 0) {
                position_ids_.push_back(id);
                continue;
            }
            auto it = std::find(oov_.begin(), oov_.end(), tok);
            if (it == oov_.end()) {
                oov_.push_back(tok);
                it = oov_.end() - 1;
            }
            position_ids_.push_back(static_cast<int>(vocab + static_cast<std::size_t>(it - oov_.begin())));
        }
    }

    State initial_state() const { return initial_; }

    std::size_t extended_size() const { return output_vocab_.size() + oov_.size(); }

    const std::string& token(int ext_id) const {
        const auto vocab = output_vocab_.size();
        return static_cast<std::size_t>(ext_id) < vocab ? output_vocab_.token(ext_id)
                                                        : oov_.at(static_cast<std::size_t>(ext_id) - vocab);
    }

    TokenSequence tokens(const std::vector<int>& ids) const {
        TokenSequence out;
        for (int id : ids) out.push_back(token(id));
        return out;
    }

    // Generation and copy probabilities merged per extended id.
    std::pair<std::vector<T>, State> distribution(const State& state, int prev) const {
        nn::Tape<T> tape(&model_.params(), false);
        EncodedCodeVars enc;
        enc.states = tape.constant(states_);
        enc.states_t = tape.constant(states_t_);
        enc.length = states_.rows();
        const nn::Var edit = tape.constant(edit_);
        const int input = static_cast<std::size_t>(prev) < output_vocab_.size() ? prev : special::kUnk;
        const auto out = model_.decoder_step(tape, input, {tape.constant(state.hidden), tape.constant(state.cell)},
                                             edit, enc);
        const T gate = tape.scalar(out.gate);
        const auto& gen = tape.value(out.generation).data;
        const auto& attn = tape.value(out.attention).data;
        std::vector<T> probs(extended_size(), T(0));
        for (std::size_t v = 0; v < gen.size(); ++v) probs[v] = gate * gen[v];
        for (std::size_t i = 0; i < attn.size(); ++i)
            probs[static_cast<std::size_t>(position_ids_[i])] += (T(1) - gate) * attn[i];
        return {std::move(probs), State{tape.value(out.state.hidden), tape.value(out.state.cell)}};
    }

    std::pair<std::vector<double>, State> step(const State& state, int prev) const {
        auto [probs, next] = distribution(state, prev);
        std::vector<double> logp(probs.size());
        for (std::size_t i = 0; i < probs.size(); ++i)
            logp[i] = probs[i] > T(0) ? std::log(static_cast<double>(probs[i]))
                                      : -std::numeric_limits<double>::infinity();
        return {std::move(logp), std::move(next)};
    }

private:
    const CodeChangeEmbedder<T>& model_;
    const Vocabulary& output_vocab_;
    nn::Tensor<T> edit_;
    nn::Tensor<T> states_;
    nn::Tensor<T> states_t_;
    State initial_;
    std::vector<int> position_ids_;
    TokenSequence oov_;
};

inline std::size_t default_max_len(std::size_t input_len) { return 2 * input_len + 10; }

struct Generated {
    TokenSequence tokens;
    double score = 0;
};

// Ranked outputs for `source` under a given edit vector; width 1 is greedy.
template <class T>
std::vector<Generated> generate(const CodeChangeEmbedder<T>& model, const Vocabulary& code_vocab,
                                const Vocabulary& output_vocab, const TokenSequence& source,
                                const nn::Tensor<T>& edit_vector, std::size_t width, std::size_t max_len = 0) {
    const ModelStepper<T> stepper(model, code_vocab, output_vocab, source, edit_vector);
    SearchConfig cfg;
    cfg.width = width;
    cfg.max_len = max_len ? max_len : default_max_len(source.size());
    std::vector<Generated> out;
    for (const auto& h : beam_search(stepper, cfg)) out.push_back({stepper.tokens(h.tokens), h.score});
    return out;
}

template <class T>
TokenSequence generate_greedy(const CodeChangeEmbedder<T>& model, const Vocabulary& code_vocab,
                              const Vocabulary& output_vocab, const TokenSequence& source,
                              const nn::Tensor<T>& edit_vector, std::size_t max_len = 0) {
    const ModelStepper<T> stepper(model, code_vocab, output_vocab, source, edit_vector);
    SearchConfig cfg;
    cfg.max_len = max_len ? max_len : default_max_len(source.size());
    return stepper.tokens(greedy_decode(stepper, cfg));
}

}  // namespace cce
