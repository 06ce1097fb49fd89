#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cce/align.hpp"
#include "cce/corpus.hpp"
#include "cce/error.hpp"
#include "cce/nn.hpp"
#include "cce/random.hpp"
#include "cce/tokenize.hpp"

namespace cce {

inline const char* edit_form_name(EditForm f) { return f == EditForm::Full ? "full" : "compressed"; }

inline EditForm parse_edit_form(const std::string& s) {
    if (s == "full") return EditForm::Full;
    if (s == "compressed") return EditForm::Compressed;
    throw UsageError("edit form must be 'full' or 'compressed', got '" + s + "'");
}

struct ModelConfig {
    std::size_t vocab_size = special::kCount;
    std::size_t output_vocab_size = special::kCount;
    std::size_t token_dim = 64;
    std::size_t action_dim = 8;
    std::size_t encoder_hidden = 64;  // per direction, code and edit encoders
    std::size_t decoder_hidden = 128;
    EditForm edit_form = EditForm::Compressed;
    std::uint64_t seed = 13;

    std::size_t edit_dim() const { return 2 * encoder_hidden; }
    std::size_t context_dim() const { return 2 * encoder_hidden; }

    void validate() const {
        for (std::size_t d : {vocab_size, output_vocab_size, token_dim, action_dim, encoder_hidden, decoder_hidden})
            if (d < 1) throw ValidationError("model dimensions must be >= 1");
        if (vocab_size < static_cast<std::size_t>(special::kCount) ||
            output_vocab_size < static_cast<std::size_t>(special::kCount))
            throw ValidationError("vocabulary sizes must cover the reserved symbols");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"vocab_size", c.vocab_size},         {"output_vocab_size", c.output_vocab_size},
         {"token_dim", c.token_dim},           {"action_dim", c.action_dim},
         {"encoder_hidden", c.encoder_hidden}, {"decoder_hidden", c.decoder_hidden},
         {"edit_form", edit_form_name(c.edit_form)}, {"seed", c.seed}};
}

// Missing keys keep their current values, so a partial config file works as
// an override on top of defaults.
inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    auto read = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    read("vocab_size", c.vocab_size);
    read("output_vocab_size", c.output_vocab_size);
    read("token_dim", c.token_dim);
    read("action_dim", c.action_dim);
    read("encoder_hidden", c.encoder_hidden);
    read("decoder_hidden", c.decoder_hidden);
    read("seed", c.seed);
    if (j.contains("edit_form")) c.edit_form = parse_edit_form(j.at("edit_form").get<std::string>());
}

// ---------------------------------------------------------------------------
// Model inputs

struct EditColumnIds {
    int action;
    int before;  // special::kEmpty when the column has no before-token
    int after;

    friend bool operator==(const EditColumnIds&, const EditColumnIds&) = default;
};

struct EditInput {
    std::vector<EditColumnIds> columns;
    EditForm form = EditForm::Full;

    friend bool operator==(const EditInput&, const EditInput&) = default;
};

inline EditInput encode_edit_sequence(const EditSequence& seq, const Vocabulary& vocab) {
    EditInput in;
    in.form = seq.form;
    in.columns.reserve(seq.size());
    for (const auto& c : seq.columns)
        in.columns.push_back({static_cast<int>(c.action), c.before ? vocab.id(*c.before) : special::kEmpty,
                              c.after ? vocab.id(*c.after) : special::kEmpty});
    return in;
}

inline EditSequence edit_for(const TokenSequence& before, const TokenSequence& after, EditForm form) {
    EditSequence seq = align(before, after);
    return form == EditForm::Compressed ? compress(seq) : seq;
}

// A fully prepared training/decoding sample. The decoder emits tokens of the
// output vocabulary or copies source positions.
struct Example {
    IdSequence source_ids;  // code vocabulary
    TokenSequence source_tokens;
    EditInput edit;
    TokenSequence target_tokens;  // reference output without EOS
    IdSequence input_ids;         // decoder inputs: SOS then the reference ids (UNK when OOV)
    // Per target position (EOS last): vocabulary id credited to generation
    // (-1 for none) and the source positions credited to copying.
    std::vector<int> gen_ids;
    std::vector<std::vector<std::size_t>> copy_positions;
};

inline Example make_example(const TokenSequence& source, const EditSequence& edit, const TokenSequence& target,
                            const Vocabulary& code_vocab, const Vocabulary& output_vocab) {
    if (source.empty()) throw ValidationError("source code sequence is empty");
    Example ex;
    ex.source_tokens = source;
    ex.source_ids = encode(source, code_vocab);
    ex.edit = encode_edit_sequence(edit, code_vocab);
    ex.target_tokens = target;
    ex.input_ids.push_back(special::kSos);
    for (const auto& tok : target) {
        const int id = output_vocab.find(tok);
        std::vector<std::size_t> positions;
        for (std::size_t i = 0; i < source.size(); ++i)
            if (source[i] == tok) positions.push_back(i);
        if (id >= 0) {
            ex.gen_ids.push_back(id);
        } else {
            ex.gen_ids.push_back(positions.empty() ? special::kUnk : -1);
        }
        ex.copy_positions.push_back(std::move(positions));
        ex.input_ids.push_back(id >= 0 ? id : special::kUnk);
    }
    ex.gen_ids.push_back(special::kEos);
    ex.copy_positions.emplace_back();
    return ex;
}

// Pre-training sample: rebuild `after` from `before` and the edit.
inline Example make_change_example(const CodeChange& change, EditForm form, const Vocabulary& vocab) {
    return make_example(change.before, edit_for(change.before, change.after, form), change.after, vocab, vocab);
}

// ---------------------------------------------------------------------------

// Values of one decoder step; all are Vars on the caller's tape.
struct DecoderState {
    nn::Var hidden;
    nn::Var cell;
};

struct EncodedCodeVars {
    nn::Var states;      // positions x context_dim
    nn::Var states_t;    // context_dim x positions
    nn::Var summary;     // context_dim
    std::size_t length = 0;
};

struct StepOutput {
    nn::Var generation;  // output vocabulary distribution
    nn::Var attention;   // weights over source positions, also the copy distribution
    nn::Var gate;        // scalar share of generation
    DecoderState state;
};

template <class T>
class CodeChangeEmbedder {
public:
    explicit CodeChangeEmbedder(ModelConfig config) : config_(std::move(config)) {
        config_.validate();
        Rng rng(config_.seed);
        add_encoder_params(rng);
        add_decoder_params(rng);
        bind();
    }

    CodeChangeEmbedder(ModelConfig config, nn::ParameterSet<T> params)
        : config_(std::move(config)), params_(std::move(params)) {
        config_.validate();
        bind();
        check_shapes();
    }

    const ModelConfig& config() const { return config_; }
    nn::ParameterSet<T>& params() { return params_; }
    const nn::ParameterSet<T>& params() const { return params_; }

    // Keeps the encoders and installs a freshly initialized decoder and output
    // head over a new output vocabulary.
    void replace_decoder(std::size_t output_vocab_size, std::uint64_t seed) {
        nn::ParameterSet<T> kept;
        for (const auto& p : params_)
            if (nn::is_encoder(p.component)) kept.add(p.name, p.component, p.value);
        params_ = std::move(kept);
        config_.output_vocab_size = output_vocab_size;
        config_.validate();
        Rng rng(seed);
        add_decoder_params(rng);
        bind();
    }

    // When set, the generate/copy gate is pinned to this value.
    std::optional<T> forced_gate;

    // -----------------------------------------------------------------------

    EncodedCodeVars encode_code(nn::Tape<T>& tape, const IdSequence& ids) const {
        if (ids.empty()) throw ValidationError("encode_code: empty input sequence");
        const nn::Var table = tape.param(ix_.code_embed);
        std::vector<nn::Var> inputs;
        inputs.reserve(ids.size());
        for (int id : ids) inputs.push_back(tape.embedding(table, checked_id(id, config_.vocab_size)));
        auto [rows, summary] = bidirectional(tape, inputs, ix_.code_fwd_w, ix_.code_fwd_b, ix_.code_bwd_w,
                                             ix_.code_bwd_b, config_.encoder_hidden);
        EncodedCodeVars enc;
        enc.states = tape.stack(rows);
        enc.states_t = tape.transpose(enc.states);
        enc.summary = summary;
        enc.length = ids.size();
        return enc;
    }

    nn::Var encode_edit(nn::Tape<T>& tape, const EditInput& edit) const {
        if (edit.form != config_.edit_form)
            throw ValidationError(std::string("encode_edit: model expects a ") + edit_form_name(config_.edit_form) +
                                  " edit sequence, got " + edit_form_name(edit.form));
        if (edit.columns.empty()) return tape.param(ix_.no_edit);
        const nn::Var tokens = tape.param(ix_.edit_token_embed);
        const nn::Var actions = tape.param(ix_.edit_action_embed);
        std::vector<nn::Var> inputs;
        inputs.reserve(edit.columns.size());
        for (const auto& c : edit.columns) {
            inputs.push_back(tape.concat({tape.embedding(actions, checked_id(c.action, kEditActionCount)),
                                          tape.embedding(tokens, checked_id(c.before, config_.vocab_size)),
                                          tape.embedding(tokens, checked_id(c.after, config_.vocab_size))}));
        }
        return bidirectional(tape, inputs, ix_.edit_fwd_w, ix_.edit_fwd_b, ix_.edit_bwd_w, ix_.edit_bwd_b,
                             config_.encoder_hidden)
            .second;
    }

    // Affine map of [code summary; edit vector] split into hidden and cell.
    DecoderState init_decoder_state(nn::Tape<T>& tape, nn::Var summary, nn::Var edit) const {
        const nn::Var z = tape.add(tape.matmul(tape.param(ix_.init_w), tape.concat({summary, edit})),
                                   tape.param(ix_.init_b));
        const std::size_t h = config_.decoder_hidden;
        return {tape.slice(z, 0, h), tape.slice(z, h, h)};
    }

    StepOutput decoder_step(nn::Tape<T>& tape, int prev_id, DecoderState state, nn::Var edit,
                            const EncodedCodeVars& enc) const {
        const nn::Var embedded = tape.embedding(tape.param(ix_.dec_embed), checked_id(prev_id, config_.output_vocab_size));
        const nn::Var input = tape.concat({embedded, edit});
        const auto next = nn::recurrent_cell_step(tape, nn::CellState<T>{state.hidden, state.cell}, input,
                                                  tape.param(ix_.cell_w), tape.param(ix_.cell_b));
        const nn::Var query = tape.matmul(tape.param(ix_.attn_w), next.hidden);
        const nn::Var attention = tape.softmax(tape.matmul(enc.states, query));
        const nn::Var context = tape.matmul(enc.states_t, attention);
        const nn::Var features = tape.concat({next.hidden, context});
        const nn::Var generation =
            tape.softmax(tape.add(tape.matmul(tape.param(ix_.out_w), features), tape.param(ix_.out_b)));
        nn::Var gate;
        if (forced_gate) {
            gate = tape.constant(nn::Tensor<T>::scalar(*forced_gate));
        } else {
            gate = tape.sigmoid(tape.add(tape.matmul(tape.param(ix_.gate_w), tape.concat({features, input})),
                                         tape.param(ix_.gate_b)));
        }
        return {generation, attention, gate, {next.hidden, next.cell}};
    }

    // Teacher-forced mean negative log-likelihood of the reference (EOS
    // included) under the generate/copy mixture.
    nn::Var compute_loss(nn::Tape<T>& tape, const Example& ex) const {
        const EncodedCodeVars enc = encode_code(tape, ex.source_ids);
        const nn::Var edit = encode_edit(tape, ex.edit);
        DecoderState state = init_decoder_state(tape, enc.summary, edit);
        std::vector<nn::Var> terms;
        terms.reserve(ex.gen_ids.size());
        for (std::size_t t = 0; t < ex.gen_ids.size(); ++t) {
            const StepOutput out = decoder_step(tape, ex.input_ids[t], state, edit, enc);
            state = out.state;
            std::optional<nn::Var> prob;
            if (ex.gen_ids[t] >= 0)
                prob = tape.mul(out.gate, tape.pick(out.generation, static_cast<std::size_t>(ex.gen_ids[t])));
            if (!ex.copy_positions[t].empty()) {
                const nn::Var copy =
                    tape.mul(tape.affine(out.gate, T(-1), T(1)), tape.gather_sum(out.attention, ex.copy_positions[t]));
                prob = prob ? tape.add(*prob, copy) : copy;
            }
            terms.push_back(tape.affine(tape.log(*prob), T(-1), T(0)));
        }
        return tape.mean(terms);
    }

    T loss_value(const Example& ex) const {
        nn::Tape<T> tape(&params_, false);
        return tape.scalar(compute_loss(tape, ex));
    }

private:
    struct Indices {
        std::size_t code_embed, code_fwd_w, code_fwd_b, code_bwd_w, code_bwd_b;
        std::size_t edit_token_embed, edit_action_embed, edit_fwd_w, edit_fwd_b, edit_bwd_w, edit_bwd_b, no_edit;
        std::size_t dec_embed, init_w, init_b, cell_w, cell_b, attn_w;
        std::size_t out_w, out_b, gate_w, gate_b;
    };

    static std::size_t checked_id(int id, std::size_t limit) {
        if (id < 0 || static_cast<std::size_t>(id) >= limit)
            throw ValidationError("id " + std::to_string(id) + " outside table of " + std::to_string(limit) + " rows");
        return static_cast<std::size_t>(id);
    }

    void add_encoder_params(Rng& rng) {
        using nn::Component;
        const auto& c = config_;
        const std::size_t h = c.encoder_hidden;
        params_.add("code.embed", Component::CodeEncoder, {c.vocab_size, c.token_dim}, rng);
        params_.add("code.fwd.W", Component::CodeEncoder, {4 * h, c.token_dim + h}, rng);
        params_.add("code.fwd.b", Component::CodeEncoder, {4 * h}, rng, c.token_dim + h);
        params_.add("code.bwd.W", Component::CodeEncoder, {4 * h, c.token_dim + h}, rng);
        params_.add("code.bwd.b", Component::CodeEncoder, {4 * h}, rng, c.token_dim + h);
        const std::size_t column = c.action_dim + 2 * c.token_dim;
        params_.add("edit.token_embed", Component::EditEncoder, {c.vocab_size, c.token_dim}, rng);
        params_.add("edit.action_embed", Component::EditEncoder, {kEditActionCount, c.action_dim}, rng);
        params_.add("edit.fwd.W", Component::EditEncoder, {4 * h, column + h}, rng);
        params_.add("edit.fwd.b", Component::EditEncoder, {4 * h}, rng, column + h);
        params_.add("edit.bwd.W", Component::EditEncoder, {4 * h, column + h}, rng);
        params_.add("edit.bwd.b", Component::EditEncoder, {4 * h}, rng, column + h);
        params_.add("edit.no_edit", Component::EditEncoder, {c.edit_dim()}, rng, h);
    }

    void add_decoder_params(Rng& rng) {
        using nn::Component;
        const auto& c = config_;
        const std::size_t h = c.decoder_hidden;
        const std::size_t input = c.token_dim + c.edit_dim();
        const std::size_t features = h + c.context_dim();
        params_.add("dec.embed", Component::Decoder, {c.output_vocab_size, c.token_dim}, rng);
        params_.add("dec.init.W", Component::Decoder, {2 * h, c.context_dim() + c.edit_dim()}, rng);
        params_.add("dec.init.b", Component::Decoder, {2 * h}, rng, c.context_dim() + c.edit_dim());
        params_.add("dec.cell.W", Component::Decoder, {4 * h, input + h}, rng);
        params_.add("dec.cell.b", Component::Decoder, {4 * h}, rng, input + h);
        params_.add("dec.attn.W", Component::Decoder, {c.context_dim(), h}, rng);
        params_.add("out.W", Component::OutputHead, {c.output_vocab_size, features}, rng);
        params_.add("out.b", Component::OutputHead, {c.output_vocab_size}, rng, features);
        params_.add("out.gate.W", Component::OutputHead, {1, features + input}, rng);
        params_.add("out.gate.b", Component::OutputHead, {1}, rng, features + input);
    }

    void bind() {
        auto at = [&](const char* name) { return params_.index_of(name); };
        ix_ = {at("code.embed"),       at("code.fwd.W"),       at("code.fwd.b"), at("code.bwd.W"),
               at("code.bwd.b"),       at("edit.token_embed"), at("edit.action_embed"),
               at("edit.fwd.W"),       at("edit.fwd.b"),       at("edit.bwd.W"), at("edit.bwd.b"),
               at("edit.no_edit"),     at("dec.embed"),        at("dec.init.W"), at("dec.init.b"),
               at("dec.cell.W"),       at("dec.cell.b"),       at("dec.attn.W"), at("out.W"),
               at("out.b"),            at("out.gate.W"),       at("out.gate.b")};
    }

    void check_shapes() const {
        const CodeChangeEmbedder reference(config_);
        if (reference.params_.size() != params_.size())
            throw ValidationError("parameter count " + std::to_string(params_.size()) + " does not match config (" +
                                  std::to_string(reference.params_.size()) + ")");
        for (const auto& p : reference.params_) {
            const auto& mine = params_[params_.index_of(p.name)];
            if (mine.value.shape != p.value.shape || mine.component != p.component)
                throw ValidationError("parameter '" + p.name + "' has shape " + nn::shape_str(mine.value.shape) +
                                      ", config expects " + nn::shape_str(p.value.shape));
        }
    }

    // Returns per-position [forward; backward] states and the summary
    // [forward final; backward final].
    std::pair<std::vector<nn::Var>, nn::Var> bidirectional(nn::Tape<T>& tape, const std::vector<nn::Var>& inputs,
                                                           std::size_t fw, std::size_t fb, std::size_t bw,
                                                           std::size_t bb, std::size_t hidden) const {
        const std::size_t n = inputs.size();
        const nn::Var zero = tape.constant(nn::Tensor<T>({hidden}));
        std::vector<nn::Var> fwd(n), bwd(n);
        nn::CellState<T> s{zero, zero};
        const nn::Var fW = tape.param(fw), fB = tape.param(fb), bW = tape.param(bw), bB = tape.param(bb);
        for (std::size_t i = 0; i < n; ++i) {
            s = nn::recurrent_cell_step(tape, s, inputs[i], fW, fB);
            fwd[i] = s.hidden;
        }
        s = {zero, zero};
        for (std::size_t i = n; i-- > 0;) {
            s = nn::recurrent_cell_step(tape, s, inputs[i], bW, bB);
            bwd[i] = s.hidden;
        }
        std::vector<nn::Var> rows;
        rows.reserve(n);
        for (std::size_t i = 0; i < n; ++i) rows.push_back(tape.concat({fwd[i], bwd[i]}));
        return {rows, tape.concat({fwd[n - 1], bwd[0]})};
    }

    ModelConfig config_;
    nn::ParameterSet<T> params_;
    Indices ix_{};
};

// Edit representation of before -> after: align, compress when the model
// uses compressed edits, then run the edit encoder.
template <class T>
nn::Tensor<T> embed_change(const CodeChangeEmbedder<T>& model, const Vocabulary& vocab, const TokenSequence& before,
                           const TokenSequence& after) {
    const EditInput edit = encode_edit_sequence(edit_for(before, after, model.config().edit_form), vocab);
    nn::Tape<T> tape(&model.params(), false);
    return tape.value(model.encode_edit(tape, edit));
}

}  // namespace cce
