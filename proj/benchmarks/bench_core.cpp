#include <benchmark/benchmark.h>

#include "ptext/evalkit.hpp"
#include "ptext/losses.hpp"
#include "ptext/scoring.hpp"
#include "ptext/trainer.hpp"

namespace {

using namespace ptext;

const std::vector<std::string> kClasses = {"dog", "rain", "siren", "engine", "bird"};

LabeledCorpus bench_corpus(std::size_t per_class) {
  const std::vector<std::string> extras = {"barks", "falls", "wails", "hums", "sings", "near", "loud", "outside"};
  LabeledCorpus corpus;
  corpus.class_names = kClasses;
  for (std::size_t c = 0; c < kClasses.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Label l(kClasses.size(), 0);
      l[c] = 1;
      corpus.captions.push_back({"the " + kClasses[c] + " " + extras[i % extras.size()] + " " +
                                     extras[(i + 3) % extras.size()],
                                 l, CaptionSource::Collected});
    }
  }
  return corpus;
}

void BM_EncodeCaption(benchmark::State& state) {
  const auto w = init_encoder(0);
  std::string text = "dog";
  for (int i = 1; i < state.range(0); ++i) text += " word" + std::to_string(i);
  const auto tokens = tokenize(text);
  for (auto _ : state) benchmark::DoNotOptimize(encode_caption(w, tokens));
}
BENCHMARK(BM_EncodeCaption)->Arg(4)->Arg(16)->Arg(64);

void BM_ClassFeatures(benchmark::State& state) {
  TrainConfig cfg;
  cfg.prompt_length = static_cast<std::size_t>(state.range(0));
  const auto w = init_encoder(0);
  const auto bank = init_prompts(cfg, kClasses);
  for (auto _ : state) benchmark::DoNotOptimize(encode_class_features(w, bank, Grain::Coarse));
}
BENCHMARK(BM_ClassFeatures)->Arg(1)->Arg(4)->Arg(16);

void BM_AggregateFine(benchmark::State& state) {
  const Mat p = Mat::Random(state.range(0), 5);
  for (auto _ : state) benchmark::DoNotOptimize(aggregate_fine(p, 0.1));
}
BENCHMARK(BM_AggregateFine)->Arg(8)->Arg(64);

void BM_TotalLossBatch(benchmark::State& state) {
  TrainConfig cfg;
  cfg.prompt_length = static_cast<std::size_t>(state.range(0));
  const auto w = init_encoder(0);
  const auto bank = init_prompts(cfg, kClasses);
  const auto feats = encode_captions(w, bench_corpus(7));
  const std::span<const CaptionFeatures> batch(feats.data(), std::min<std::size_t>(32, feats.size()));
  for (auto _ : state) benchmark::DoNotOptimize(total_loss(w, bank, batch, LossOptions{}));
}
BENCHMARK(BM_TotalLossBatch)->Arg(1)->Arg(16);

void BM_TrainEpoch(benchmark::State& state) {
  TrainConfig cfg;
  cfg.epochs = 1;
  const auto w = init_encoder(0);
  const auto corpus = bench_corpus(20);
  for (auto _ : state) benchmark::DoNotOptimize(train(cfg, corpus, w));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
