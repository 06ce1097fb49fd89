#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "cce/model.hpp"
#include "cce/synthetic.hpp"
#include "cce/train.hpp"
#include "fixtures.hpp"

using namespace cce;

namespace {

const Vocabulary kVocab = fixture::letters(6);

template <class T>
nn::Tensor<T> code_states(const CodeChangeEmbedder<T>& m, const TokenSequence& code) {
    nn::Tape<T> tape(&m.params(), false);
    return tape.value(m.encode_code(tape, encode(code, kVocab)).states);
}

nn::Var weighted(nn::Tape<double>& t, nn::Var v, std::uint64_t seed) {
    Rng rng(seed);
    nn::Tensor<double> w(t.value(v).shape);
    for (auto& x : w.data) x = rng.uniform(-1, 1);
    return t.sum(t.mul(v, t.constant(w)));
}

}  // namespace

TEST(ModelConfig, JsonRoundTripAndValidation) {
    ModelConfig c = fixture::tiny_config(kVocab, 3, EditForm::Full);
    nlohmann::json j = c;
    EXPECT_EQ(j.get<ModelConfig>(), c);
    c.token_dim = 0;
    EXPECT_THROW(c.validate(), ValidationError);
    EXPECT_THROW(parse_edit_form("sideways"), UsageError);
}

TEST(EncodeCode, ShapesAndEmptyInput) {
    const CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 1));
    const auto states = code_states(m, {"a"});
    EXPECT_EQ(states.shape, (nn::Shape{1, 6}));
    nn::Tape<double> tape(&m.params(), false);
    EXPECT_THROW(m.encode_code(tape, {}), ValidationError);
}

TEST(EncodeCode, OrderSensitive) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, seed));
        EXPECT_NE(code_states(m, {"a", "b"}), code_states(m, {"b", "a"}));
    }
}

TEST(EncodeCode, GradCheck) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 2));
    const auto ids = encode({"a", "c", "b"}, kVocab);
    const double err = nn::grad_check(m.params(), [&](nn::Tape<double>& t) {
        const auto enc = m.encode_code(t, ids);
        return t.add(weighted(t, enc.states, 1), weighted(t, enc.summary, 2));
    });
    EXPECT_LT(err, 1e-4);
}

TEST(EncodeEdit, CompressedIgnoresContextFullDoesNot) {
    const TokenSequence b1{"a", "b", "c"}, a1{"a", "d", "c"};
    const TokenSequence b2{"e", "e", "b", "f"}, a2{"e", "e", "d", "f"};
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const CodeChangeEmbedder<float> comp(fixture::tiny_config(kVocab, seed, EditForm::Compressed));
        EXPECT_EQ(embed_change(comp, kVocab, b1, a1), embed_change(comp, kVocab, b2, a2));
        const CodeChangeEmbedder<float> full(fixture::tiny_config(kVocab, seed, EditForm::Full));
        EXPECT_NE(embed_change(full, kVocab, b1, a1), embed_change(full, kVocab, b2, a2));
    }
}

TEST(EncodeEdit, EmptyCompressedEditIsTheNoEditVector) {
    const CodeChangeEmbedder<float> m(fixture::tiny_config(kVocab, 4));
    const auto v = embed_change(m, kVocab, {"a", "b"}, {"a", "b"});
    EXPECT_EQ(v, m.params()[m.params().index_of("edit.no_edit")].value);
    EXPECT_EQ(v.size(), m.config().edit_dim());
}

TEST(EncodeEdit, FormMismatchIsRejected) {
    const CodeChangeEmbedder<float> m(fixture::tiny_config(kVocab, 4, EditForm::Compressed));
    nn::Tape<float> tape(&m.params(), false);
    EXPECT_THROW(m.encode_edit(tape, encode_edit_sequence(align({"a"}, {"b"}), kVocab)), ValidationError);
}

TEST(EncodeEdit, GradCheck) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 6, EditForm::Full));
    const auto edit = encode_edit_sequence(align({"a", "b", "c"}, {"a", "d"}), kVocab);
    EXPECT_LT(nn::grad_check(m.params(), [&](nn::Tape<double>& t) { return weighted(t, m.encode_edit(t, edit), 3); }),
              1e-4);
}

TEST(InitDecoderState, ZeroInputsAndBiasGiveZeroState) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 1));
    auto& b = m.params()[m.params().index_of("dec.init.b")].value;
    std::fill(b.data.begin(), b.data.end(), 0.0);
    nn::Tape<double> tape(&m.params(), false);
    const auto s = m.init_decoder_state(tape, tape.constant(nn::Tensor<double>({6})), tape.constant(nn::Tensor<double>({6})));
    EXPECT_EQ(tape.value(s.hidden), nn::Tensor<double>({4}));
    EXPECT_EQ(tape.value(s.cell), nn::Tensor<double>({4}));
}

TEST(InitDecoderState, GradCheck) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 7));
    const auto ids = encode({"b", "a"}, kVocab);
    const auto edit = encode_edit_sequence(compress(align({"b", "a"}, {"b", "c"})), kVocab);
    EXPECT_LT(nn::grad_check(m.params(),
                             [&](nn::Tape<double>& t) {
                                 const auto enc = m.encode_code(t, ids);
                                 const auto s = m.init_decoder_state(t, enc.summary, m.encode_edit(t, edit));
                                 return t.add(weighted(t, s.hidden, 4), weighted(t, s.cell, 5));
                             }),
              1e-4);
}

TEST(DecoderStep, MixtureIsADistribution) {
    Rng rng(8);
    for (int trial = 0; trial < 100; ++trial) {
        const CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, rng.next()));
        const auto code = fixture::random_code(rng, 6, 6);
        nn::Tape<double> tape(&m.params(), false);
        const auto enc = m.encode_code(tape, encode(code, kVocab));
        const auto edit = m.encode_edit(tape, encode_edit_sequence(edit_for(code, fixture::random_code(rng, 6, 6),
                                                                            EditForm::Compressed),
                                                                   kVocab));
        auto state = m.init_decoder_state(tape, enc.summary, edit);
        int prev = special::kSos;
        for (int step = 0; step < 3; ++step) {
            const auto out = m.decoder_step(tape, prev, state, edit, enc);
            const double g = tape.scalar(out.gate);
            ASSERT_GE(g, 0.0);
            ASSERT_LE(g, 1.0);
            double total = 0, attn = 0;
            for (double p : tape.value(out.generation).data) total += g * p;
            for (double a : tape.value(out.attention).data) {
                ASSERT_GE(a, 0.0);
                attn += a;
            }
            total += (1 - g) * attn;
            ASSERT_NEAR(attn, 1.0, 1e-6);
            ASSERT_NEAR(total, 1.0, 1e-6);
            state = out.state;
            prev = static_cast<int>(rng.below(kVocab.size()));
        }
    }
}

TEST(DecoderStep, ForcedGateOfOneLeavesNoCopyMass) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 9));
    m.forced_gate = 1.0;
    nn::Tape<double> tape(&m.params(), false);
    const auto enc = m.encode_code(tape, encode({"a", "b"}, kVocab));
    const auto edit = m.encode_edit(tape, encode_edit_sequence(EditSequence{{}, EditForm::Compressed}, kVocab));
    const auto out = m.decoder_step(tape, special::kSos, m.init_decoder_state(tape, enc.summary, edit), edit, enc);
    EXPECT_EQ(1.0 - tape.scalar(out.gate), 0.0);
}

TEST(DecoderStep, GradCheck) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 10));
    const auto ids = encode({"c", "a", "f"}, kVocab);
    const auto edit = encode_edit_sequence(compress(align({"c", "a", "f"}, {"c", "f"})), kVocab);
    EXPECT_LT(nn::grad_check(m.params(),
                             [&](nn::Tape<double>& t) {
                                 const auto enc = m.encode_code(t, ids);
                                 const auto e = m.encode_edit(t, edit);
                                 auto out = m.decoder_step(t, kVocab.id("c"), m.init_decoder_state(t, enc.summary, e), e, enc);
                                 out = m.decoder_step(t, kVocab.id("f"), out.state, e, enc);
                                 return t.add(t.add(weighted(t, out.generation, 6), weighted(t, out.attention, 7)),
                                              out.gate);
                             }),
              1e-4);
}

TEST(ComputeLoss, UniformGenerationGivesLogV) {
    CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 11));
    m.forced_gate = 1.0;
    for (const char* name : {"out.W", "out.b"}) {
        auto& v = m.params()[m.params().index_of(name)].value.data;
        std::fill(v.begin(), v.end(), 0.0);
    }
    const auto ex = make_change_example({{"a", "b"}, {"a", "c", "d"}}, EditForm::Compressed, kVocab);
    EXPECT_NEAR(m.loss_value(ex), std::log(static_cast<double>(kVocab.size())), 1e-12);
}

TEST(ComputeLoss, DecreasesUnderOptimization) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, seed));
        const auto ex = make_change_example({{"a", "b", "c"}, {"a", "e", "c"}}, EditForm::Compressed, kVocab);
        TrainConfig cfg;
        cfg.learning_rate = 1e-2;
        Adam<double> adam(m.params(), cfg);
        nn::Gradients<double> g(m.params());
        double prev = m.loss_value(ex);
        for (int step = 0; step < 50; ++step) {
            g.zero();
            nn::Tape<double> tape(&m.params());
            tape.backward(m.compute_loss(tape, ex));
            tape.accumulate(g);
            adam.step(m.params(), g);
            const double now = m.loss_value(ex);
            EXPECT_LT(now, prev) << "seed " << seed << " step " << step;
            prev = now;
        }
    }
}

TEST(ComputeLoss, OovReferenceIsCopiedNotInfinite) {
    const CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, 12));
    const auto ex = make_change_example({{"a", "zeta"}, {"zeta", "a"}}, EditForm::Compressed, kVocab);
    EXPECT_EQ(ex.gen_ids[0], -1);
    EXPECT_EQ(ex.copy_positions[0], std::vector<std::size_t>{1});
    EXPECT_TRUE(std::isfinite(m.loss_value(ex)));
}

TEST(ComputeLoss, EndToEndGradCheck) {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        for (EditForm form : {EditForm::Compressed, EditForm::Full}) {
            CodeChangeEmbedder<double> m(fixture::tiny_config(kVocab, seed, form));
            const auto ex = make_change_example({{"a", "b", "a"}, {"a", "d", "b", "q"}}, form, kVocab);
            EXPECT_LT(nn::grad_check(m.params(), [&](nn::Tape<double>& t) { return m.compute_loss(t, ex); }), 1e-4);
        }
    }
}

TEST(MakeExample, CreditsGenerationAndCopy) {
    const auto ex = make_example({"a", "b", "a"}, compress(align({"a", "b", "a"}, {"a", "x"})), {"a", "x"}, kVocab, kVocab);
    ASSERT_EQ(ex.gen_ids.size(), 3u);
    EXPECT_EQ(ex.gen_ids[0], kVocab.id("a"));
    EXPECT_EQ(ex.copy_positions[0], (std::vector<std::size_t>{0, 2}));
    EXPECT_EQ(ex.gen_ids[1], special::kUnk);
    EXPECT_TRUE(ex.copy_positions[1].empty());
    EXPECT_EQ(ex.gen_ids[2], special::kEos);
    EXPECT_EQ(ex.input_ids, (IdSequence{special::kSos, kVocab.id("a"), special::kUnk}));
    EXPECT_THROW(make_example({}, EditSequence{}, {"a"}, kVocab, kVocab), ValidationError);
}

TEST(Model, SameSeedSameParameters) {
    const CodeChangeEmbedder<float> a(fixture::tiny_config(kVocab, 42)), b(fixture::tiny_config(kVocab, 42));
    const CodeChangeEmbedder<float> c(fixture::tiny_config(kVocab, 43));
    EXPECT_EQ(a.params(), b.params());
    EXPECT_NE(a.params(), c.params());
    const auto ex = make_change_example({{"a", "b"}, {"b"}}, EditForm::Compressed, kVocab);
    EXPECT_EQ(a.loss_value(ex), b.loss_value(ex));
}

TEST(Model, ReplaceDecoderKeepsEncoders) {
    CodeChangeEmbedder<float> m(fixture::tiny_config(kVocab, 13));
    const auto before = m.params();
    m.replace_decoder(20, 99);
    EXPECT_EQ(m.config().output_vocab_size, 20u);
    for (const auto& p : before) {
        const auto& now = m.params()[m.params().index_of(p.name)];
        if (nn::is_encoder(p.component)) EXPECT_EQ(now.value, p.value) << p.name;
        else EXPECT_NE(now.value, p.value) << p.name;
    }
}

// Replacement classes compress to the same edit everywhere. Inserted lines
// may align against punctuation of a neighbouring statement, so for guard
// classes only the multiset of added tokens is fixed.
TEST(Model, SyntheticClassesCompressToStableEdits) {
    Rng rng(5);
    for (std::size_t cls = 0; cls < synthetic::change_classes().size(); ++cls) {
        const std::string label(synthetic::change_classes()[cls].label);
        const bool insertion = label.rfind("guard", 0) == 0;
        std::optional<EditSequence> first;
        for (std::size_t ctx = 0; ctx < synthetic::kContexts; ++ctx)
            for (int i = 0; i < 10; ++i) {
                const auto pair = synthetic::to_pair(synthetic::make_change(cls, ctx, rng));
                auto c = compress(align(pair.before, pair.after));
                if (insertion) {
                    for (const auto& col : c.columns) EXPECT_EQ(col.action, EditAction::Add) << label;
                    std::sort(c.columns.begin(), c.columns.end(),
                              [](const EditColumn& a, const EditColumn& b) { return a.after < b.after; });
                }
                if (!first) first = c;
                EXPECT_EQ(c, *first) << label;
            }
    }
}
