#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cce/corpus.hpp"
#include "cce/decode.hpp"
#include "cce/error.hpp"
#include "cce/model.hpp"
#include "cce/nn.hpp"
#include "cce/random.hpp"
#include "cce/tokenize.hpp"

namespace cce {

struct TrainConfig {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 50;
    std::size_t patience = 5;
    double clip_norm = 5.0;
    std::uint64_t seed = 13;

    void validate() const {
        if (!(learning_rate > 0 && beta1 > 0 && beta2 > 0 && epsilon > 0 && clip_norm > 0))
            throw ValidationError("optimizer hyperparameters must be positive");
        if (beta1 >= 1 || beta2 >= 1) throw ValidationError("moment decay rates must be below 1");
        if (batch_size < 1 || max_epochs < 1 || patience < 1)
            throw ValidationError("batch size, epochs and patience must be positive");
        if (patience > max_epochs) throw ValidationError("patience must not exceed max_epochs");
    }

    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = {{"learning_rate", c.learning_rate}, {"beta1", c.beta1},           {"beta2", c.beta2},
         {"epsilon", c.epsilon},             {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs},
         {"patience", c.patience},           {"clip_norm", c.clip_norm},   {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    auto read = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    read("learning_rate", c.learning_rate);
    read("beta1", c.beta1);
    read("beta2", c.beta2);
    read("epsilon", c.epsilon);
    read("batch_size", c.batch_size);
    read("max_epochs", c.max_epochs);
    read("patience", c.patience);
    read("clip_norm", c.clip_norm);
    read("seed", c.seed);
}

// ---------------------------------------------------------------------------
// Optimization

// Scales gradients so their global L2 norm is at most `max_norm`. Returns the
// norm before clipping.
template <class T>
double clip_gradients(nn::Gradients<T>& grads, double max_norm) {
    const double norm = grads.norm();
    if (!std::isfinite(norm)) throw Error("non-finite gradient");
    if (norm > max_norm) grads.scale(static_cast<T>(max_norm / norm));
    return norm;
}

// Adaptive-moment optimizer with bias correction. Parameters outside
// `trainable` are never touched and do not count towards the clipping norm.
template <class T>
class Adam {
public:
    Adam(const nn::ParameterSet<T>& params, TrainConfig cfg, std::vector<bool> trainable = {})
        : cfg_(std::move(cfg)), first_(params), second_(params), trainable_(std::move(trainable)) {
        cfg_.validate();
        if (trainable_.empty()) trainable_.assign(params.size(), true);
        if (trainable_.size() != params.size()) throw UsageError("trainable mask does not match parameter count");
    }

    std::size_t steps() const { return steps_; }

    void step(nn::ParameterSet<T>& params, nn::Gradients<T>& grads) {
        for (std::size_t p = 0; p < params.size(); ++p)
            if (!trainable_[p]) std::fill(grads.tensors[p].data.begin(), grads.tensors[p].data.end(), T(0));
        for (const auto& t : grads.tensors)
            for (auto v : t.data)
                if (std::isnan(v)) throw Error("NaN gradient");
        clip_gradients(grads, cfg_.clip_norm);
        ++steps_;
        const double b1 = cfg_.beta1, b2 = cfg_.beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t p = 0; p < params.size(); ++p) {
            if (!trainable_[p]) continue;
            auto& w = params[p].value.data;
            auto& m = first_.tensors[p].data;
            auto& v = second_.tensors[p].data;
            const auto& g = grads.tensors[p].data;
            for (std::size_t k = 0; k < w.size(); ++k) {
                m[k] = static_cast<T>(b1 * m[k] + (1 - b1) * g[k]);
                v[k] = static_cast<T>(b2 * v[k] + (1 - b2) * g[k] * g[k]);
                const double mhat = m[k] / c1;
                const double vhat = v[k] / c2;
                w[k] = static_cast<T>(w[k] - cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon));
            }
        }
    }

private:
    TrainConfig cfg_;
    nn::Gradients<T> first_;
    nn::Gradients<T> second_;
    std::vector<bool> trainable_;
    std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Checkpoints

struct TensorRecord {
    std::string name;
    nn::Component component;
    nn::Shape shape;
    std::vector<double> data;

    friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

struct Checkpoint {
    static constexpr std::uint32_t kVersion = 1;

    std::uint32_t version = kVersion;
    ModelConfig config;
    Vocabulary code_vocab;
    std::optional<Vocabulary> message_vocab;
    nlohmann::json metadata = nlohmann::json::object();
    std::vector<TensorRecord> tensors;

    const TensorRecord* find(const std::string& name) const {
        for (const auto& t : tensors)
            if (t.name == name) return &t;
        return nullptr;
    }

    // Vocabulary the decoder emits.
    const Vocabulary& output_vocab() const { return message_vocab ? *message_vocab : code_vocab; }

    friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'C', 'C', 'E', 'C', 'K', 'P', 'T', '\0'};

inline std::uint64_t fnv1a(const std::string& bytes, std::size_t length) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < length; ++i) {
        h ^= static_cast<unsigned char>(bytes[i]);
        h *= 0x100000001b3ULL;
    }
    return h;
}

template <class U>
void put(std::string& out, U value) {
    static_assert(std::is_integral_v<U>);
    for (std::size_t i = 0; i < sizeof(U); ++i)
        out.push_back(static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF));
}

inline void put_f64(std::string& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

    template <class U>
    U get() {
        need(sizeof(U));
        std::uint64_t v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
        pos_ += sizeof(U);
        return static_cast<U>(v);
    }

    double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

    std::string get_bytes(std::size_t n) {
        need(n);
        std::string s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == end_; }

private:
    void need(std::size_t n) const {
        if (n > end_ - pos_) throw IntegrityError("checkpoint is truncated");
    }

    const std::string& bytes_;
    std::size_t end_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// Layout: magic, u32 version, u64 length + JSON header (config, vocabularies,
// metadata), u64 tensor count, per tensor (u32 name length, name, u8 tag,
// u32 rank, u64 dims, f64 data), then an FNV-1a 64 checksum of everything
// before it. All integers and floats little-endian.
inline std::string serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json header = {{"config", ckpt.config},
                             {"code_vocab", ckpt.code_vocab.tokens()},
                             {"message_vocab", ckpt.message_vocab ? nlohmann::json(ckpt.message_vocab->tokens())
                                                                  : nlohmann::json(nullptr)},
                             {"metadata", ckpt.metadata}};
    const std::string text = header.dump();
    std::string out(detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic));
    detail::put<std::uint32_t>(out, ckpt.version);
    detail::put<std::uint64_t>(out, text.size());
    out += text;
    detail::put<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& t : ckpt.tensors) {
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
        out += t.name;
        detail::put<std::uint8_t>(out, static_cast<std::uint8_t>(t.component));
        detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (auto d : t.shape) detail::put<std::uint64_t>(out, d);
        for (double v : t.data) detail::put_f64(out, v);
    }
    detail::put<std::uint64_t>(out, detail::fnv1a(out, out.size()));
    return out;
}

inline Vocabulary vocabulary_from_tokens(const std::vector<std::string>& tokens) {
    std::ostringstream os;
    os << kVocabHeader << '\n';
    for (const auto& t : tokens) os << t << '\n';
    std::istringstream is(os.str());
    return Vocabulary::load(is);
}

inline Checkpoint deserialize_checkpoint(const std::string& bytes) {
    constexpr std::size_t kPrefix = sizeof(detail::kCheckpointMagic) + sizeof(std::uint32_t);
    if (bytes.size() < kPrefix || std::memcmp(bytes.data(), detail::kCheckpointMagic, sizeof(detail::kCheckpointMagic)))
        throw FormatError("not a checkpoint file (bad magic bytes)");
    detail::Reader prefix(bytes, kPrefix);
    prefix.get_bytes(sizeof(detail::kCheckpointMagic));
    const auto version = prefix.get<std::uint32_t>();
    if (version != Checkpoint::kVersion) throw VersionError(version, Checkpoint::kVersion);
    if (bytes.size() < kPrefix + 8) throw IntegrityError("checkpoint is truncated");
    const std::size_t body = bytes.size() - 8;
    const std::string trailer = bytes.substr(body);
    detail::Reader tail(trailer, 8);
    if (tail.get<std::uint64_t>() != detail::fnv1a(bytes, body))
        throw IntegrityError("checkpoint checksum mismatch (file corrupted or truncated)");

    detail::Reader in(bytes, body);
    in.get_bytes(kPrefix);
    Checkpoint ckpt;
    ckpt.version = version;
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(in.get_bytes(in.get<std::uint64_t>()));
        ckpt.config = header.at("config").get<ModelConfig>();
        ckpt.code_vocab = vocabulary_from_tokens(header.at("code_vocab").get<std::vector<std::string>>());
        if (!header.at("message_vocab").is_null())
            ckpt.message_vocab = vocabulary_from_tokens(header.at("message_vocab").get<std::vector<std::string>>());
        ckpt.metadata = header.at("metadata");
    } catch (const nlohmann::json::exception& e) {
        throw IntegrityError(std::string("checkpoint header is invalid: ") + e.what());
    }
    const auto count = in.get<std::uint64_t>();
    std::set<std::string> names;
    for (std::uint64_t i = 0; i < count; ++i) {
        TensorRecord t;
        t.name = in.get_bytes(in.get<std::uint32_t>());
        const auto tag = in.get<std::uint8_t>();
        if (tag > static_cast<std::uint8_t>(nn::Component::OutputHead))
            throw IntegrityError("tensor '" + t.name + "' has unknown component tag " + std::to_string(tag));
        t.component = static_cast<nn::Component>(tag);
        const auto rank = in.get<std::uint32_t>();
        if (rank < 1 || rank > 2) throw IntegrityError("tensor '" + t.name + "' has rank " + std::to_string(rank));
        for (std::uint32_t d = 0; d < rank; ++d) t.shape.push_back(static_cast<std::size_t>(in.get<std::uint64_t>()));
        const std::size_t n = nn::shape_size(t.shape);
        t.data.reserve(n);
        for (std::size_t k = 0; k < n; ++k) t.data.push_back(in.get_f64());
        if (!names.insert(t.name).second) throw IntegrityError("tensor '" + t.name + "' appears twice");
        ckpt.tensors.push_back(std::move(t));
    }
    if (!in.done()) throw IntegrityError("trailing bytes after the last tensor");
    return ckpt;
}

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("cannot write checkpoint " + path);
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw DataError("failed writing checkpoint " + path);
}

inline std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline Checkpoint load_checkpoint(const std::string& path) { return deserialize_checkpoint(read_file(path)); }

// Short identity for reports and manifests.
inline std::string checkpoint_id(const Checkpoint& ckpt) {
    const std::string bytes = serialize_checkpoint(ckpt);
    std::ostringstream os;
    os << std::hex << detail::fnv1a(bytes, bytes.size());
    return os.str();
}

template <class T>
std::vector<TensorRecord> tensor_records(const nn::ParameterSet<T>& params) {
    std::vector<TensorRecord> out;
    for (const auto& p : params)
        out.push_back({p.name, p.component, p.value.shape, std::vector<double>(p.value.data.begin(), p.value.data.end())});
    return out;
}

template <class T>
CodeChangeEmbedder<T> load_model(const Checkpoint& ckpt) {
    nn::ParameterSet<T> params;
    for (const auto& t : ckpt.tensors) {
        nn::Tensor<T> value(t.shape);
        for (std::size_t k = 0; k < t.data.size(); ++k) value[k] = static_cast<T>(t.data[k]);
        params.add(t.name, t.component, std::move(value));
    }
    try {
        return CodeChangeEmbedder<T>(ckpt.config, std::move(params));
    } catch (const UsageError& e) {
        throw ValidationError(std::string("checkpoint does not match the model layout: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochRecord {
    std::size_t epoch;
    double train_loss;
    double valid_loss;
};

struct TrainOutcome {
    std::vector<EpochRecord> history;
    std::size_t best_epoch = 0;
    double best_valid_loss = std::numeric_limits<double>::infinity();
};

inline nlohmann::json history_json(const TrainOutcome& o) {
    nlohmann::json h = nlohmann::json::array();
    for (const auto& r : o.history) h.push_back({{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"valid_loss", r.valid_loss}});
    return h;
}

template <class T>
double mean_loss(const CodeChangeEmbedder<T>& model, const std::vector<Example>& examples) {
    double total = 0;
    for (const auto& ex : examples) total += static_cast<double>(model.loss_value(ex));
    return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

// Mini-batch training with early stopping; leaves the model holding the
// parameters of the epoch with the lowest validation loss (training loss when
// no validation data is given). Sample order in an epoch depends only on
// (seed, epoch).
template <class T>
TrainOutcome train_model(CodeChangeEmbedder<T>& model, const std::vector<Example>& train,
                         const std::vector<Example>& valid, const TrainConfig& cfg, std::vector<bool> trainable = {},
                         std::ostream* log = nullptr) {
    cfg.validate();
    if (train.empty()) throw ValidationError("training split is empty");
    Adam<T> adam(model.params(), cfg, std::move(trainable));
    nn::Gradients<T> grads(model.params());
    TrainOutcome outcome;
    nn::ParameterSet<T> best = model.params();
    std::size_t stale = 0;
    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<std::size_t> order(train.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.seed, epoch));
        rng.shuffle(order);
        double epoch_loss = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            grads.zero();
            for (std::size_t i = start; i < stop; ++i) {
                nn::Tape<T> tape(&model.params());
                const nn::Var loss = model.compute_loss(tape, train[order[i]]);
                epoch_loss += static_cast<double>(tape.scalar(loss));
                tape.backward(loss);
                tape.accumulate(grads);
            }
            grads.scale(static_cast<T>(1.0 / static_cast<double>(stop - start)));
            adam.step(model.params(), grads);
        }
        const double train_loss = epoch_loss / static_cast<double>(train.size());
        const double valid_loss = valid.empty() ? mean_loss(model, train) : mean_loss(model, valid);
        outcome.history.push_back({epoch, train_loss, valid_loss});
        if (log) *log << "epoch=" << epoch << " train_loss=" << train_loss << " valid_loss=" << valid_loss << '\n';
        if (valid_loss < outcome.best_valid_loss) {
            outcome.best_valid_loss = valid_loss;
            outcome.best_epoch = epoch;
            best = model.params();
            stale = 0;
        } else if (++stale >= cfg.patience) {
            break;
        }
    }
    model.params() = std::move(best);
    return outcome;
}

// Unsupervised pre-training on the apply-the-edit objective. The vocabulary
// is built from the training split.
template <class T = float>
Checkpoint pretrain(const std::vector<CodeChange>& train, const std::vector<CodeChange>& valid, ModelConfig model_cfg,
                    const TrainConfig& train_cfg, std::size_t vocab_cap = kDefaultVocabCap, std::ostream* log = nullptr) {
    if (train.empty()) throw ValidationError("pretrain: training split is empty");
    std::vector<TokenSequence> corpus;
    for (const auto& c : train) {
        corpus.push_back(c.before);
        corpus.push_back(c.after);
    }
    Checkpoint ckpt;
    ckpt.code_vocab = build_vocabulary(corpus, vocab_cap);
    model_cfg.vocab_size = model_cfg.output_vocab_size = ckpt.code_vocab.size();
    CodeChangeEmbedder<T> model(model_cfg);
    std::vector<Example> train_ex, valid_ex;
    for (const auto& c : train) train_ex.push_back(make_change_example(c, model_cfg.edit_form, ckpt.code_vocab));
    for (const auto& c : valid) valid_ex.push_back(make_change_example(c, model_cfg.edit_form, ckpt.code_vocab));
    const TrainOutcome outcome = train_model(model, train_ex, valid_ex, train_cfg, {}, log);
    ckpt.config = model.config();
    ckpt.tensors = tensor_records(model.params());
    ckpt.metadata = {{"stage", "pretrain"},
                     {"best_epoch", outcome.best_epoch},
                     {"best_valid_loss", outcome.best_valid_loss},
                     {"epochs_run", outcome.history.size()},
                     {"train_config", train_cfg},
                     {"history", history_json(outcome)}};
    return ckpt;
}

// (source code, edit, message tokens) supervision from a commit.
struct MessageSample {
    TokenSequence before;
    TokenSequence after;
    TokenSequence message;
};

inline MessageSample message_sample(const CommitSample& commit) {
    const DiffReconstruction r = diff_to_pair(commit.diff_tokens);
    if (r.pair.before.empty())
        throw ValidationError("commit has no code before the change; filter whole-file changes first");
    return {r.pair.before, r.pair.after, tokenize_code(first_sentence(commit.message))};
}

inline Example make_message_example(const MessageSample& s, EditForm form, const Vocabulary& code_vocab,
                                    const Vocabulary& message_vocab) {
    return make_example(s.before, edit_for(s.before, s.after, form), s.message, code_vocab, message_vocab);
}

// Freezes both encoders of `base`, replaces decoder and output head with
// fresh ones over a message vocabulary, and trains only those.
template <class T = float>
Checkpoint finetune_messages(const Checkpoint& base, const std::vector<CommitSample>& train,
                             const std::vector<CommitSample>& valid, const TrainConfig& train_cfg,
                             std::size_t vocab_cap = kDefaultVocabCap, std::ostream* log = nullptr) {
    for (const char* name : {"code.embed", "edit.token_embed"}) {
        const TensorRecord* t = base.find(name);
        if (!t || !nn::is_encoder(t->component))
            throw ValidationError(std::string("base checkpoint lacks encoder-tagged tensor '") + name + "'");
    }
    if (train.empty()) throw ValidationError("finetune: training split is empty");
    CodeChangeEmbedder<T> model = load_model<T>(base);
    std::vector<MessageSample> train_s, valid_s;
    for (const auto& c : train) train_s.push_back(message_sample(c));
    for (const auto& c : valid) valid_s.push_back(message_sample(c));
    std::vector<TokenSequence> messages;
    for (const auto& s : train_s) messages.push_back(s.message);

    Checkpoint ckpt;
    ckpt.code_vocab = base.code_vocab;
    ckpt.message_vocab = build_vocabulary(messages, vocab_cap);
    model.replace_decoder(ckpt.message_vocab->size(), derive_seed(train_cfg.seed, 0xDEC0DE));

    const EditForm form = model.config().edit_form;
    std::vector<Example> train_ex, valid_ex;
    for (const auto& s : train_s) train_ex.push_back(make_message_example(s, form, ckpt.code_vocab, *ckpt.message_vocab));
    for (const auto& s : valid_s) valid_ex.push_back(make_message_example(s, form, ckpt.code_vocab, *ckpt.message_vocab));
    std::vector<bool> trainable;
    for (const auto& p : model.params()) trainable.push_back(!nn::is_encoder(p.component));
    const TrainOutcome outcome = train_model(model, train_ex, valid_ex, train_cfg, trainable, log);

    ckpt.config = model.config();
    ckpt.tensors = tensor_records(model.params());
    ckpt.metadata = {{"stage", "finetune-messages"},
                     {"base", checkpoint_id(base)},
                     {"best_epoch", outcome.best_epoch},
                     {"best_valid_loss", outcome.best_valid_loss},
                     {"epochs_run", outcome.history.size()},
                     {"train_config", train_cfg},
                     {"history", history_json(outcome)}};
    return ckpt;
}

// ---------------------------------------------------------------------------
// Inference helpers over a loaded model

template <class T>
struct LoadedModel {
    Checkpoint checkpoint;
    CodeChangeEmbedder<T> model;

    explicit LoadedModel(Checkpoint c) : checkpoint(std::move(c)), model(load_model<T>(checkpoint)) {}

    const Vocabulary& code_vocab() const { return checkpoint.code_vocab; }
    const Vocabulary& output_vocab() const { return checkpoint.output_vocab(); }

    nn::Tensor<T> embed(const TokenSequence& before, const TokenSequence& after) const {
        return embed_change(model, code_vocab(), before, after);
    }

    // Applies the change donor.before -> donor.after to `code`.
    std::vector<Generated> apply(const TokenSequence& code, const CodeChange& donor, std::size_t width) const {
        return generate(model, code_vocab(), output_vocab(), code, embed(donor.before, donor.after), width);
    }

    TokenSequence apply_greedy(const TokenSequence& code, const CodeChange& donor) const {
        return generate_greedy(model, code_vocab(), output_vocab(), code, embed(donor.before, donor.after));
    }

    std::vector<Generated> message(const CommitSample& commit, std::size_t width) const {
        const MessageSample s = message_sample(commit);
        return generate(model, code_vocab(), output_vocab(), s.before, embed(s.before, s.after), width,
                        default_max_len(s.before.size()));
    }
};

}  // namespace cce
