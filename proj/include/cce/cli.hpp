#pragma once

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cce/align.hpp"
#include "cce/corpus.hpp"
#include "cce/decode.hpp"
#include "cce/error.hpp"
#include "cce/eval.hpp"
#include "cce/model.hpp"
#include "cce/synthetic.hpp"
#include "cce/tokenize.hpp"
#include "cce/train.hpp"

namespace cce::cli {

using json = nlohmann::json;

// Everything a command may read from a config file. Command-line flags are
// applied on top.
struct RunConfig {
    std::uint64_t seed = 13;
    ModelConfig model;
    TrainConfig train;
    std::size_t vocab_cap = kDefaultVocabCap;
    std::size_t max_len = 0;  // 0: keep pairs of any length
    std::array<double, 3> split{0.8, 0.1, 0.1};
    bool filter_commits = false;

    SplitSpec split_spec() const { return {split, seed}; }
};

inline void to_json(json& j, const RunConfig& c) {
    j = {{"seed", c.seed},
         {"model", c.model},
         {"train", c.train},
         {"vocab_cap", c.vocab_cap},
         {"max_len", c.max_len},
         {"split", c.split},
         {"filter_commits", c.filter_commits}};
}

inline void from_json(const json& j, RunConfig& c) {
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("model")) from_json(j.at("model"), c.model);
    if (j.contains("train")) from_json(j.at("train"), c.train);
    if (j.contains("vocab_cap")) c.vocab_cap = j.at("vocab_cap").get<std::size_t>();
    if (j.contains("max_len")) c.max_len = j.at("max_len").get<std::size_t>();
    if (j.contains("split")) c.split = j.at("split").get<std::array<double, 3>>();
    if (j.contains("filter_commits")) c.filter_commits = j.at("filter_commits").get<bool>();
}

inline std::string file_checksum(const std::string& path) {
    const std::string bytes = read_file(path);
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << cce::detail::fnv1a(bytes, bytes.size());
    return os.str();
}

// Write-then-rename so readers never observe a partial file.
inline void write_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("cannot write " + path);
        os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!os) throw DataError("failed writing " + path);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw DataError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

inline std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

struct RunManifest {
    std::string command;
    std::vector<std::string> argv;
    json config;
    std::uint64_t seed = 0;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;

    json to_json() const {
        json in = json::object(), out = json::object();
        for (const auto& p : inputs) in[p] = file_checksum(p);
        for (const auto& p : outputs) out[p] = file_checksum(p);
        return {{"command", command}, {"argv", argv},  {"config", config},  {"seed", seed},
                {"inputs", in},       {"outputs", out}, {"timestamp", utc_timestamp()}};
    }

    // Stored beside the first output.
    void write() const {
        if (outputs.empty()) return;
        write_atomic(manifest_path(outputs.front()), to_json().dump(2) + "\n");
    }
};

namespace detail {

struct Options {
    std::string data, config, checkpoint, out, before, after, donor, hyp, ref, manifest, kind = "changes";
    std::size_t beam_width = 50, folds = 10, jobs = 1, count = 50;
    std::string edit_form = "compressed";
    std::uint64_t seed = 13;
};

inline TokenSequence read_code(const std::string& path) { return tokenize_code(read_file(path)); }

inline std::string join(const TokenSequence& tokens) {
    std::string s;
    for (std::size_t i = 0; i < tokens.size(); ++i) s += (i ? " " : "") + tokens[i];
    return s;
}

inline std::vector<TokenSequence> read_token_lines(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot read " + path);
    std::vector<TokenSequence> out;
    std::string line;
    while (std::getline(is, line)) {
        std::istringstream ls(line);
        TokenSequence toks;
        for (std::string t; ls >> t;) toks.push_back(t);
        out.push_back(std::move(toks));
    }
    return out;
}

inline std::string format_real(double v) {
    std::ostringstream os;
    os << std::setprecision(std::numeric_limits<float>::max_digits10) << v;
    return os.str();
}

class Runner {
public:
    Runner(const Options& o, const CLI::App& app, std::vector<std::string> argv, std::ostream& out, std::ostream& err)
        : o_(o), app_(app), argv_(std::move(argv)), out_(out), err_(err) {}

    int run(const std::string& command) {
        command_ = command;
        resolve_config();
        if (command == "align") return align_cmd();
        if (command == "build-vocab") return build_vocab_cmd();
        if (command == "pretrain") return pretrain_cmd();
        if (command == "apply") return apply_cmd();
        if (command == "embed") return embed_cmd();
        if (command == "finetune-msg") return finetune_cmd();
        if (command == "generate-msg") return generate_msg_cmd();
        if (command == "eval-transfer") return eval_transfer_cmd();
        if (command == "eval-bleu") return eval_bleu_cmd();
        if (command == "crossval") return crossval_cmd();
        if (command == "synth") return synth_cmd();
        if (command == "replay") return replay_cmd();
        throw UsageError("unknown command " + command);
    }

private:
    bool given(const std::string& flag) const {
        const CLI::App* sub = app_.get_subcommands().front();
        const CLI::Option* opt = sub->get_option_no_throw(flag);
        return opt && opt->count() > 0;
    }

    const std::string& need(const std::string& value, const std::string& flag) {
        if (value.empty()) throw UsageError(command_ + " requires " + flag);
        return value;
    }

    void input(const std::string& path) { inputs_.push_back(path); }

    void resolve_config() {
        if (!o_.config.empty()) {
            input(o_.config);
            try {
                cfg_ = json::parse(read_file(o_.config)).get<RunConfig>();
            } catch (const json::exception& e) {
                throw DataError("config " + o_.config + ": " + e.what());
            }
        }
        if (given("--seed") || o_.config.empty()) cfg_.seed = o_.seed;
        if (given("--edit-form")) cfg_.model.edit_form = parse_edit_form(o_.edit_form);
        cfg_.model.seed = cfg_.seed;
        cfg_.train.seed = cfg_.seed;
        cfg_.model.validate();
        cfg_.train.validate();
    }

    json provenance(const std::string& checkpoint_identity = "") const {
        json j = {{"command", command_}, {"config", cfg_}, {"seed", cfg_.seed}};
        if (!checkpoint_identity.empty()) j["checkpoint"] = checkpoint_identity;
        return j;
    }

    void finish(std::vector<std::string> outputs) {
        RunManifest m{command_, argv_, cfg_, cfg_.seed, inputs_, std::move(outputs)};
        m.write();
    }

    void write_report(const json& report) {
        const std::string text = report.dump(2) + "\n";
        if (o_.out.empty()) {
            out_ << text;
            return;
        }
        write_atomic(o_.out, text);
        finish({o_.out});
    }

    Checkpoint load_ckpt() {
        need(o_.checkpoint, "--checkpoint");
        input(o_.checkpoint);
        return load_checkpoint(o_.checkpoint);
    }

    std::vector<ChangePair> load_pairs() {
        need(o_.data, "--data");
        input(o_.data);
        auto pairs = load_change_pairs(o_.data);
        if (cfg_.max_len) pairs = filter_change_pairs(pairs, cfg_.max_len);
        return pairs;
    }

    std::vector<CommitSample> load_commits() {
        need(o_.data, "--data");
        input(o_.data);
        auto commits = load_commit_samples(o_.data);
        if (cfg_.filter_commits) commits = filter_commits(commits, FilterRules::filtered_commits());
        return commits;
    }

    int align_cmd() {
        const auto before = read_code(need(o_.before, "--before"));
        const auto after = read_code(need(o_.after, "--after"));
        input(o_.before);
        input(o_.after);
        EditSequence seq = align(before, after);
        if (given("--edit-form") && parse_edit_form(o_.edit_form) == EditForm::Compressed) seq = compress(seq);
        const std::string text = render(seq);
        if (o_.out.empty()) {
            out_ << text;
        } else {
            write_atomic(o_.out, text);
            finish({o_.out});
        }
        return 0;
    }

    int build_vocab_cmd() {
        const auto pairs = load_pairs();
        std::vector<TokenSequence> corpus;
        for (const auto& p : pairs) {
            corpus.push_back(p.before);
            corpus.push_back(p.after);
        }
        const Vocabulary vocab = build_vocabulary(corpus, cfg_.vocab_cap);
        std::ostringstream os;
        vocab.save(os);
        if (o_.out.empty()) {
            out_ << os.str();
        } else {
            write_atomic(o_.out, os.str());
            finish({o_.out});
            out_ << "vocabulary of " << vocab.size() << " tokens written to " << o_.out << '\n';
        }
        return 0;
    }

    int pretrain_cmd() {
        need(o_.out, "--out");
        const auto split = split_dataset(load_pairs(), cfg_.split_spec());
        Checkpoint ckpt = pretrain<float>(strip_labels(split.train), strip_labels(split.valid), cfg_.model, cfg_.train,
                                          cfg_.vocab_cap, &err_);
        ckpt.metadata["provenance"] = provenance();
        ckpt.metadata["split_sizes"] = {split.train.size(), split.valid.size(), split.test.size()};
        write_atomic(o_.out, serialize_checkpoint(ckpt));
        finish({o_.out});
        out_ << "checkpoint " << checkpoint_id(ckpt) << " written to " << o_.out << '\n';
        return 0;
    }

    CodeChange read_donor() {
        need(o_.donor, "--donor");
        input(o_.donor);
        const auto pairs = load_change_pairs(o_.donor);
        if (pairs.empty()) throw ValidationError("donor file " + o_.donor + " holds no change pair");
        return {pairs.front().before, pairs.front().after};
    }

    int apply_cmd() {
        const LoadedModel<float> lm(load_ckpt());
        const auto code = read_code(need(o_.before, "--before"));
        input(o_.before);
        const CodeChange donor = read_donor();
        const auto outputs = lm.apply(code, donor, o_.beam_width);
        std::ostringstream os;
        for (const auto& g : outputs) os << format_real(g.score) << '\t' << join(g.tokens) << '\n';
        out_ << os.str();
        if (!o_.out.empty()) {
            write_atomic(o_.out, os.str());
            finish({o_.out});
        }
        return 0;
    }

    int embed_cmd() {
        const LoadedModel<float> lm(load_ckpt());
        std::vector<CodeChange> changes;
        if (!o_.before.empty() || !o_.after.empty()) {
            changes.push_back({read_code(need(o_.before, "--before")), read_code(need(o_.after, "--after"))});
            input(o_.before);
            input(o_.after);
        } else {
            changes = strip_labels(load_pairs());
        }
        std::ostringstream os;
        for (const auto& c : changes) {
            const auto v = lm.embed(c.before, c.after);
            for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << format_real(v.data[i]);
            os << '\n';
        }
        out_ << os.str();
        if (!o_.out.empty()) {
            write_atomic(o_.out, os.str());
            finish({o_.out});
        }
        return 0;
    }

    int finetune_cmd() {
        need(o_.out, "--out");
        const Checkpoint base = load_ckpt();
        const auto split = split_dataset(load_commits(), cfg_.split_spec());
        Checkpoint ckpt = finetune_messages<float>(base, split.train, split.valid, cfg_.train, cfg_.vocab_cap, &err_);
        ckpt.metadata["provenance"] = provenance(checkpoint_id(base));
        ckpt.metadata["split_sizes"] = {split.train.size(), split.valid.size(), split.test.size()};
        write_atomic(o_.out, serialize_checkpoint(ckpt));
        finish({o_.out});
        out_ << "checkpoint " << checkpoint_id(ckpt) << " written to " << o_.out << '\n';
        return 0;
    }

    int generate_msg_cmd() {
        const LoadedModel<float> lm(load_ckpt());
        if (!lm.checkpoint.message_vocab) throw ValidationError("checkpoint has no message decoder; run finetune-msg");
        const auto commits = load_commits();
        std::vector<TokenSequence> hyps, refs;
        json rows = json::array();
        for (const auto& c : commits) {
            const auto outputs = lm.message(c, o_.beam_width);
            TokenSequence best = outputs.empty() ? TokenSequence{} : outputs.front().tokens;
            TokenSequence ref = tokenize_code(first_sentence(c.message));
            out_ << join(best) << '\n';
            rows.push_back({{"generated", join(best)}, {"reference", join(ref)}});
            hyps.push_back(std::move(best));
            refs.push_back(std::move(ref));
        }
        if (o_.out.empty()) return 0;
        json report = provenance(checkpoint_id(lm.checkpoint));
        report["beam_width"] = o_.beam_width;
        report["messages"] = rows;
        report["exact_match"] = exact_match_accuracy(hyps, refs);
        if (!hyps.empty()) report["bleu"] = corpus_bleu(hyps, refs);
        write_report(report);
        return 0;
    }

    int eval_transfer_cmd() {
        const LoadedModel<float> lm(load_ckpt());
        const auto labeled = load_pairs();
        const auto applier = [&](const CodeChange& donor, const TokenSequence& code) {
            std::vector<TokenSequence> out;
            for (auto& g : lm.apply(code, donor, o_.beam_width)) out.push_back(std::move(g.tokens));
            return out;
        };
        const TransferReport r = transfer_eval(labeled, applier, cfg_.seed, o_.beam_width);
        out_ << "attempts=" << r.attempts << " top1=" << r.accuracy_top1() << " top" << r.k << "=" << r.accuracy_topk()
             << " skipped_classes=" << r.skipped_classes << '\n';
        json report = provenance(checkpoint_id(lm.checkpoint));
        report["beam_width"] = o_.beam_width;
        report["transfer"] = r;
        if (!o_.out.empty()) write_report(report);
        return 0;
    }

    int eval_bleu_cmd() {
        input(need(o_.hyp, "--hyp"));
        input(need(o_.ref, "--ref"));
        const BleuReport r = corpus_bleu(read_token_lines(o_.hyp), read_token_lines(o_.ref));
        out_ << "BLEU=" << r.bleu << '\n';
        json report = provenance();
        report["bleu"] = r;
        if (!o_.out.empty()) write_report(report);
        return 0;
    }

    int crossval_cmd() {
        const Checkpoint base = load_ckpt();
        const auto commits = load_commits();
        const std::size_t width = o_.beam_width;
        const auto protocol = [&](const std::vector<CommitSample>& train, const std::vector<CommitSample>& valid,
                                  const std::vector<CommitSample>& test) {
            const LoadedModel<float> lm(finetune_messages<float>(base, train, valid, cfg_.train, cfg_.vocab_cap));
            std::vector<TokenSequence> hyps, refs;
            for (const auto& c : test) {
                const auto outputs = lm.message(c, width);
                hyps.push_back(outputs.empty() ? TokenSequence{} : outputs.front().tokens);
                refs.push_back(tokenize_code(first_sentence(c.message)));
            }
            return corpus_bleu(hyps, refs).bleu;
        };
        const CrossValidation cv = cross_validate(commits, o_.folds, cfg_.seed, protocol, o_.jobs);
        out_ << "BLEU mean=" << cv.mean << " std=" << cv.stddev << " (population)\n";
        json report = provenance(checkpoint_id(base));
        report["folds"] = o_.folds;
        report["beam_width"] = width;
        report["fold_bleu"] = cv.metrics;
        report["mean"] = cv.mean;
        report["stddev"] = cv.stddev;
        report["stddev_kind"] = "population";
        if (!o_.out.empty()) write_report(report);
        return 0;
    }

    int synth_cmd() {
        need(o_.out, "--out");
        std::ostringstream os;
        if (o_.kind == "changes") {
            write_jsonl(os, synthetic::change_corpus(o_.count, cfg_.seed));
        } else if (o_.kind == "transfer") {
            write_jsonl(os, synthetic::transfer_benchmark(cfg_.seed));
        } else if (o_.kind == "commits") {
            write_jsonl(os, synthetic::commit_corpus(o_.count, cfg_.seed));
        } else {
            throw UsageError("--kind must be changes, transfer or commits");
        }
        write_atomic(o_.out, os.str());
        finish({o_.out});
        return 0;
    }

    int replay_cmd() {
        const std::string path = need(o_.manifest, "--manifest");
        json m;
        try {
            m = json::parse(read_file(path));
        } catch (const json::exception& e) {
            throw DataError("manifest " + path + ": " + e.what());
        }
        const auto argv = m.at("argv").get<std::vector<std::string>>();
        if (!argv.empty() && argv.front() == "replay") throw UsageError("a manifest cannot replay a replay");
        for (const auto& [p, sum] : m.at("inputs").items())
            if (file_checksum(p) != sum.get<std::string>()) err_ << "warning: input " << p << " changed since the run\n";
        std::ostringstream sink;
        const int code = run_cli(argv, sink, err_);
        if (code != 0) return code;
        bool identical = true;
        for (const auto& [p, sum] : m.at("outputs").items()) {
            const bool same = file_checksum(p) == sum.get<std::string>();
            identical = identical && same;
            out_ << (same ? "identical " : "differs ") << p << '\n';
        }
        return identical ? 0 : 2;
    }

    static int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

    const Options& o_;
    const CLI::App& app_;
    std::vector<std::string> argv_;
    std::ostream& out_;
    std::ostream& err_;
    std::string command_;
    RunConfig cfg_;
    std::vector<std::string> inputs_;
};

}  // namespace detail

// Runs one subcommand. Exit codes: 0 success, 1 usage error, 2 data or
// validation error.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    detail::Options o;
    CLI::App app{"Learn and use distributed representations of code changes.", "cce"};
    app.require_subcommand(1, 1);

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config (model, train, vocab_cap, max_len, split, filter_commits)");
        sub->add_option("--seed", o.seed, "Seed for every random choice")->capture_default_str();
        sub->add_option("--out", o.out, "Output file; a manifest is written next to it");
    };
    auto add_model = [&](CLI::App* sub) {
        sub->add_option("--checkpoint", o.checkpoint, "Checkpoint file");
        sub->add_option("--beam-width", o.beam_width, "Beam width")->capture_default_str()->check(CLI::PositiveNumber);
    };
    auto edit_form = [&](CLI::App* sub) {
        sub->add_option("--edit-form", o.edit_form, "Edit sequence form")
            ->capture_default_str()
            ->check(CLI::IsMember({"full", "compressed"}));
    };

    auto* align_cmd = app.add_subcommand("align", "Print the edit sequence between two code files");
    align_cmd->add_option("--before", o.before, "Code before the change")->required();
    align_cmd->add_option("--after", o.after, "Code after the change")->required();
    edit_form(align_cmd);
    add_common(align_cmd);

    auto* vocab_cmd = app.add_subcommand("build-vocab", "Build a code vocabulary from change pairs");
    vocab_cmd->add_option("--data", o.data, "Change pairs (JSONL)")->required();
    add_common(vocab_cmd);

    auto* pretrain_cmd = app.add_subcommand("pretrain", "Pre-train on change pairs");
    pretrain_cmd->add_option("--data", o.data, "Change pairs (JSONL)")->required();
    edit_form(pretrain_cmd);
    add_common(pretrain_cmd);

    auto* apply_cmd = app.add_subcommand("apply", "Apply a donor change to code");
    apply_cmd->add_option("--before", o.before, "Code to edit")->required();
    apply_cmd->add_option("--donor", o.donor, "Donor change pair (JSONL, first line)")->required();
    add_model(apply_cmd);
    add_common(apply_cmd);

    auto* embed_cmd = app.add_subcommand("embed", "Print edit vectors");
    embed_cmd->add_option("--data", o.data, "Change pairs (JSONL)");
    embed_cmd->add_option("--before", o.before, "Code before the change");
    embed_cmd->add_option("--after", o.after, "Code after the change");
    add_model(embed_cmd);
    add_common(embed_cmd);

    auto* finetune_cmd = app.add_subcommand("finetune-msg", "Train a message decoder on frozen encoders");
    finetune_cmd->add_option("--data", o.data, "Commits (JSONL)")->required();
    add_model(finetune_cmd);
    add_common(finetune_cmd);

    auto* gen_cmd = app.add_subcommand("generate-msg", "Generate commit messages");
    gen_cmd->add_option("--data", o.data, "Commits (JSONL)")->required();
    add_model(gen_cmd);
    add_common(gen_cmd);

    auto* transfer_cmd = app.add_subcommand("eval-transfer", "Class-transfer evaluation on labeled pairs");
    transfer_cmd->add_option("--data", o.data, "Labeled change pairs (JSONL)")->required();
    add_model(transfer_cmd);
    add_common(transfer_cmd);

    auto* bleu_cmd = app.add_subcommand("eval-bleu", "Corpus BLEU of whitespace-tokenized lines");
    bleu_cmd->add_option("--hyp", o.hyp, "Hypotheses, one per line")->required();
    bleu_cmd->add_option("--ref", o.ref, "References, one per line")->required();
    add_common(bleu_cmd);

    auto* cv_cmd = app.add_subcommand("crossval", "Cross-validated message fine-tuning");
    cv_cmd->add_option("--data", o.data, "Commits (JSONL)")->required();
    cv_cmd->add_option("--folds", o.folds, "Number of folds")->capture_default_str();
    cv_cmd->add_option("--jobs", o.jobs, "Folds trained concurrently")->capture_default_str()->check(CLI::PositiveNumber);
    add_model(cv_cmd);
    add_common(cv_cmd);

    auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic corpus");
    synth_cmd->add_option("--kind", o.kind, "changes, transfer or commits")->capture_default_str();
    synth_cmd->add_option("--count", o.count, "Number of records (changes, commits)")->capture_default_str();
    add_common(synth_cmd);

    auto* replay_cmd = app.add_subcommand("replay", "Re-run a command from its manifest and compare outputs");
    replay_cmd->add_option("--manifest", o.manifest, "Manifest file")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        const auto subs = app.get_subcommands();
        err << "error: " << e.what() << "\n\n" << (subs.empty() ? app.help() : subs.front()->help());
        return 1;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        detail::Runner runner(o, app, args, out, err);
        return runner.run(command);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    }
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run_cli(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

inline int detail::Runner::run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    return cli::run_cli(args, out, err);
}

}  // namespace cce::cli
