#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jiang/config.hpp"
#include "jiang/eval.hpp"
#include "jiang/model.hpp"
#include "jiang/tokenizer.hpp"

namespace jiang {

struct TrainSchedule {
  std::uint64_t batch_token_budget = 8192;
  std::size_t seq_len_initial = 128;
  std::size_t seq_len_extended = 256;
  std::uint64_t switch_threshold_tokens = 1'000'000;
  std::uint64_t total_tokens = 8192 * 200;
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double grad_clip = 1.0;  // 0 disables clipping
  double warmup_fraction = 0.01;
  double min_lr_ratio = 0.1;
  std::uint64_t eval_every_steps = 50;

  void validate() const;
  // ceil(total_tokens / batch_token_budget)
  std::uint64_t total_steps() const;

  // Keys are prefixed with "train.".
  void write_to(KeyValues& kv) const;
  static TrainSchedule from(const KeyValues& kv);

  bool operator==(const TrainSchedule&) const = default;
};

// Initial length below the threshold, extended length from it onward.
std::size_t seq_len_at(std::uint64_t tokens_seen, const TrainSchedule& schedule);

// Linear warmup over warmup_fraction of the steps, then cosine decay to
// lr·min_lr_ratio at the last step. `step` counts from 0.
double lr_at(std::uint64_t step, std::uint64_t total_steps, const TrainSchedule& schedule);

struct AdamWHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global-norm threshold; 0 disables
};

template <typename T>
struct AdamWState {
  std::vector<std::vector<T>> m;
  std::vector<std::vector<T>> v;
  std::uint64_t step = 0;
};

struct StepReport {
  double grad_norm = 0.0;          // before clipping
  double clipped_grad_norm = 0.0;  // after clipping
};

// Clips the global gradient norm, then applies bias-corrected Adam with
// decoupled weight decay. `decay` selects which parameters receive weight
// decay (all of them when empty). Throws NumericError, leaving parameters
// and state untouched, when any gradient is non-finite. Parameters without a
// gradient are treated as having a zero gradient.
template <typename T>
StepReport adamw_step(std::span<Tensor<T>> params, AdamWState<T>& state, const AdamWHyper& hyper,
                      std::span<const bool> decay = {});

// Documents encoded and concatenated, each followed by end-of-text.
std::vector<TokenId> pack_documents(const Vocabulary& vocab, const std::vector<std::string>& docs);

struct MetricsRow {
  std::uint64_t step = 0;
  std::uint64_t tokens_seen = 0;
  std::size_t seq_len = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> eval_ppl;
  std::optional<double> eval_acc;

  bool operator==(const MetricsRow&) const = default;
};

inline constexpr std::string_view kMetricsHeader = "step,tokens_seen,seq_len,loss,lr,eval_ppl,eval_acc";
std::string format_metrics_row(const MetricsRow& row);
MetricsRow parse_metrics_row(std::string_view line);

struct TrainOptions {
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::filesystem::path metrics_csv;     // empty: no file
  std::optional<std::filesystem::path> resume;
  // Perplexity texts for milestones; the training stream is used when empty.
  std::vector<std::string> eval_texts;
  // Optional milestone accuracy task.
  std::vector<McItem> eval_mc;
  // Overrides schedule.total_steps() when nonzero.
  std::uint64_t max_steps = 0;
};

struct TrainResult {
  DecoderWeights<float> weights;
  std::vector<MetricsRow> rows;
  std::uint64_t tokens_seen = 0;
};

// Packs `stream` into sequences of the current length (a wrapping cursor,
// targets shifted by one) until the step's token budget is met, takes one
// AdamW step per batch, and evaluates and checkpoints every
// eval_every_steps and at the final step. Checkpoints are named
// step_NNNNNN.jckp and carry optimiser moments, the step and the cursor so
// that a resumed run continues bit-for-bit.
TrainResult train(const ModelConfig& config, const Vocabulary& vocab, std::span<const TokenId> stream,
                  const TrainSchedule& schedule, const TrainOptions& options);

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::uint64_t step);

}  // namespace jiang
