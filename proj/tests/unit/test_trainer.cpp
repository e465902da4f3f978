#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ptext/trainer.hpp"

namespace ptext {
namespace {

using testing::code_of;

TEST(TrainConfig, DefaultsMatchTheDocumentedValues) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.prompt_length, 16u);
  EXPECT_EQ(cfg.dim, 32u);
  EXPECT_EQ(cfg.bucket_count, 4096u);
  EXPECT_DOUBLE_EQ(cfg.tau, 0.01);
  EXPECT_DOUBLE_EQ(cfg.tau_s, 0.10);
  EXPECT_EQ(cfg.optimizer, OptimizerKind::Adam);
  cfg.validate();
}

TEST(TrainConfig, ParsesAndRoundTrips) {
  const auto cfg = parse_train_config(R"({"N": 4, "tau": 0.05, "task": "multi", "optimizer": "sgd", "seed": 9})");
  EXPECT_EQ(cfg.prompt_length, 4u);
  EXPECT_DOUBLE_EQ(cfg.tau, 0.05);
  EXPECT_EQ(cfg.task, TaskKind::MultiLabel);
  EXPECT_EQ(cfg.optimizer, OptimizerKind::Sgd);
  EXPECT_EQ(cfg.seed, 9u);
  const auto again = parse_train_config(to_json_string(cfg));
  EXPECT_EQ(to_json_string(again), to_json_string(cfg));
}

TEST(TrainConfig, RejectsBadInput) {
  EXPECT_EQ(code_of([] { parse_train_config(R"({"N": 0})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"N": -3})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"N": 2.5})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"tau": 0})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"tau_s": -1})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"lr": "fast"})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"learning_rate": 0.1})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config(R"({"optimizer": "lbfgs"})"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config("[1]"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { parse_train_config("{"); }), ErrorCode::InvalidConfig);
}

TEST(InitPrompts, ShapeStatisticsAndDeterminism) {
  TrainConfig cfg;
  const auto a = init_prompts(cfg, {"dog", "rain"});
  const auto b = init_prompts(cfg, {"dog", "rain"});
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.coarse.rows(), 16);
  EXPECT_EQ(a.fine.cols(), 32);
  EXPECT_NE(a.coarse, a.fine);
  for (const Mat* m : {&a.coarse, &a.fine}) {
    const double mean = m->mean();
    const double sd = std::sqrt((m->array() - mean).square().sum() / static_cast<double>(m->size() - 1));
    EXPECT_NEAR(sd, 0.02, 0.15 * 0.02);
  }
  cfg.seed = 1;
  EXPECT_NE(init_prompts(cfg, {"dog", "rain"}).coarse, a.coarse);
}

// Scalar Adam written out longhand.
TEST(Adam, MatchesScalarRecurrence) {
  const AdamParams hp{0.1, 0.9, 0.999, 1e-8};
  const std::vector<double> grads = {0.5, -0.2, 0.3, 0.0};
  Mat p(1, 1);
  p(0, 0) = 1.0;
  AdamState state;
  double x = 1.0, m = 0.0, v = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const double g = grads[t - 1];
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double m_hat = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
    const double v_hat = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
    x -= 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
    adam_update(p, Mat::Constant(1, 1, g), state, hp, t);
    EXPECT_NEAR(p(0, 0), x, 1e-15) << "step " << t;
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Mat p = Mat::Zero(2, 2);
  AdamState state;
  Mat g(2, 2);
  g << 3.0, -0.001, 1e3, -7.0;
  adam_update(p, g, state, AdamParams{}, 1);
  for (Eigen::Index i = 0; i < p.size(); ++i) EXPECT_NEAR(std::abs(p.data()[i]), 0.01, 1e-6);
}

TEST(Adam, ShapeAndStepChecked) {
  Mat p = Mat::Zero(2, 2);
  AdamState state;
  EXPECT_EQ(code_of([&] { adam_update(p, Mat::Zero(2, 3), state, AdamParams{}, 1); }), ErrorCode::ShapeMismatch);
  EXPECT_EQ(code_of([&] { adam_update(p, Mat::Zero(2, 2), state, AdamParams{}, 0); }), ErrorCode::InvalidInput);
}

TEST(Sgd, PlainStep) {
  Mat p = Mat::Ones(1, 2);
  Mat g(1, 2);
  g << 2.0, -4.0;
  sgd_update(p, g, 0.25);
  EXPECT_DOUBLE_EQ(p(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(p(0, 1), 2.0);
}

LabeledCorpus separable_corpus() {
  const std::vector<std::string> names = {"dog", "rain", "siren"};
  const std::vector<std::string> extras = {"loud", "near", "outside", "again", "softly"};
  LabeledCorpus corpus;
  corpus.class_names = names;
  for (std::size_t c = 0; c < names.size(); ++c) {
    for (std::size_t i = 0; i < 20; ++i) {
      Label l(names.size(), 0);
      l[c] = 1;
      corpus.captions.push_back({names[c] + " " + extras[i % extras.size()] + " " + extras[(i / 5) % extras.size()],
                                 l, CaptionSource::Collected});
    }
  }
  return corpus;
}

TEST(Train, ZeroEpochsReturnsInitialBank) {
  TrainConfig cfg;
  cfg.epochs = 0;
  const auto corpus = separable_corpus();
  const auto w = init_encoder(cfg.seed);
  const auto report = train(cfg, corpus, w);
  EXPECT_EQ(report.bank, init_prompts(cfg, corpus.class_names));
  EXPECT_TRUE(report.epochs.empty());
  EXPECT_EQ(report.steps, 0u);
}

TEST(Train, LossDecreasesAndEncoderStaysFrozen) {
  TrainConfig cfg;
  cfg.epochs = 30;
  const auto corpus = separable_corpus();
  const auto w = init_encoder(cfg.seed);
  const auto checksum = w.checksum();
  const auto report = train(cfg, corpus, w);
  ASSERT_EQ(report.epochs.size(), 30u);
  EXPECT_LT(report.epochs.back().total, report.epochs.front().total);
  EXPECT_EQ(report.steps, 30u * 2u);  // ceil(60 / 32) steps per epoch
  EXPECT_EQ(report.encoder_checksum_before, checksum);
  EXPECT_EQ(report.encoder_checksum_after, checksum);
  EXPECT_EQ(w.checksum(), checksum);
  for (const auto& e : report.epochs) {
    EXPECT_TRUE(std::isfinite(e.total));
    EXPECT_DOUBLE_EQ(e.total, e.coarse + e.fine);
  }
  // Class names and shapes survive; prompt values moved.
  EXPECT_EQ(report.bank.class_names, corpus.class_names);
  EXPECT_NE(report.bank.coarse, init_prompts(cfg, corpus.class_names).coarse);
}

TEST(Train, BitIdenticalReruns) {
  TrainConfig cfg;
  cfg.epochs = 5;
  const auto corpus = separable_corpus();
  const auto w = init_encoder(cfg.seed);
  const auto a = train(cfg, corpus, w);
  const auto b = train(cfg, corpus, w);
  EXPECT_EQ(a.bank, b.bank);
  EXPECT_EQ(report_to_json_string(a), report_to_json_string(b));
}

TEST(Train, CallbackSeesEveryEpoch) {
  TrainConfig cfg;
  cfg.epochs = 3;
  std::vector<std::size_t> seen;
  train(cfg, separable_corpus(), init_encoder(cfg.seed), [&](std::size_t e, const EpochLoss&) { seen.push_back(e); });
  EXPECT_EQ(seen.size(), 3u);
}

TEST(Train, SgdAlsoRuns) {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.optimizer = OptimizerKind::Sgd;
  cfg.lr = 1e-4;
  const auto report = train(cfg, separable_corpus(), init_encoder(cfg.seed));
  EXPECT_LT(report.epochs.back().total, report.epochs.front().total);
}

TEST(Train, RejectsMismatches) {
  TrainConfig cfg;
  cfg.task = TaskKind::MultiLabel;
  EXPECT_EQ(code_of([&] { train(cfg, separable_corpus(), init_encoder(0)); }), ErrorCode::InvalidConfig);
  cfg.task.reset();
  EXPECT_EQ(code_of([&] { train(cfg, separable_corpus(), init_encoder(0, 16)); }), ErrorCode::DimensionMismatch);
  EXPECT_EQ(code_of([&] { train(cfg, LabeledCorpus{{}, {"dog"}, TaskKind::SingleLabel}, init_encoder(0)); }),
            ErrorCode::InvalidInput);
  cfg.prompt_length = 0;
  EXPECT_EQ(code_of([&] { train(cfg, separable_corpus(), init_encoder(0)); }), ErrorCode::InvalidConfig);
}

TEST(TrainPtAudio, ReducesLossOnClipFeatures) {
  TrainConfig cfg;
  cfg.epochs = 20;
  const auto w = init_encoder(cfg.seed);
  const auto corpus = separable_corpus();
  FeatureFile features;
  features.dim = 32;
  for (const auto& f : encode_captions(w, corpus)) features.records.push_back({f.sentence, Mat(), f.label});
  const auto report = train_pt_audio(cfg, features, corpus.class_names, w);
  EXPECT_LT(report.epochs.back().total, report.epochs.front().total);
  EXPECT_EQ(report.bank.fine, init_prompts(cfg, corpus.class_names).fine);
}

}  // namespace
}  // namespace ptext
