#include "jiang/train.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>

#include "jiang/checkpoint.hpp"
#include "jiang/error.hpp"

namespace jiang {

namespace fs = std::filesystem;

void TrainSchedule::validate() const {
  if (seq_len_initial == 0) throw ContractError("seq_len_initial must be positive");
  if (seq_len_extended < seq_len_initial) throw ContractError("seq_len_extended must be >= seq_len_initial");
  if (batch_token_budget < seq_len_extended) {
    throw ContractError("batch_token_budget " + std::to_string(batch_token_budget) + " is smaller than seq_len " +
                        std::to_string(seq_len_extended));
  }
  if (total_tokens == 0) throw ContractError("total_tokens must be positive");
  if (!(lr > 0.0)) throw ContractError("lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ContractError("betas must be in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("eps must be positive");
  if (weight_decay < 0.0 || grad_clip < 0.0) throw ContractError("weight_decay and grad_clip must be >= 0");
  if (warmup_fraction < 0.0 || warmup_fraction > 1.0) throw ContractError("warmup_fraction must be in [0, 1]");
  if (min_lr_ratio < 0.0 || min_lr_ratio > 1.0) throw ContractError("min_lr_ratio must be in [0, 1]");
  if (eval_every_steps == 0) throw ContractError("eval_every_steps must be positive");
}

std::uint64_t TrainSchedule::total_steps() const {
  return (total_tokens + batch_token_budget - 1) / batch_token_budget;
}

void TrainSchedule::write_to(KeyValues& kv) const {
  kv.set("train.batch_token_budget", std::to_string(batch_token_budget));
  kv.set("train.seq_len_initial", std::to_string(seq_len_initial));
  kv.set("train.seq_len_extended", std::to_string(seq_len_extended));
  kv.set("train.switch_threshold_tokens", std::to_string(switch_threshold_tokens));
  kv.set("train.total_tokens", std::to_string(total_tokens));
  kv.set("train.lr", format_double(lr));
  kv.set("train.beta1", format_double(beta1));
  kv.set("train.beta2", format_double(beta2));
  kv.set("train.eps", format_double(eps));
  kv.set("train.weight_decay", format_double(weight_decay));
  kv.set("train.grad_clip", format_double(grad_clip));
  kv.set("train.warmup_fraction", format_double(warmup_fraction));
  kv.set("train.min_lr_ratio", format_double(min_lr_ratio));
  kv.set("train.eval_every_steps", std::to_string(eval_every_steps));
}

TrainSchedule TrainSchedule::from(const KeyValues& kv) {
  TrainSchedule s;
  s.batch_token_budget = kv.get_uint("train.batch_token_budget", s.batch_token_budget);
  s.seq_len_initial = kv.get_uint("train.seq_len_initial", s.seq_len_initial);
  s.seq_len_extended = kv.get_uint("train.seq_len_extended", s.seq_len_extended);
  s.switch_threshold_tokens = kv.get_uint("train.switch_threshold_tokens", s.switch_threshold_tokens);
  s.total_tokens = kv.get_uint("train.total_tokens", s.total_tokens);
  s.lr = kv.get_double("train.lr", s.lr);
  s.beta1 = kv.get_double("train.beta1", s.beta1);
  s.beta2 = kv.get_double("train.beta2", s.beta2);
  s.eps = kv.get_double("train.eps", s.eps);
  s.weight_decay = kv.get_double("train.weight_decay", s.weight_decay);
  s.grad_clip = kv.get_double("train.grad_clip", s.grad_clip);
  s.warmup_fraction = kv.get_double("train.warmup_fraction", s.warmup_fraction);
  s.min_lr_ratio = kv.get_double("train.min_lr_ratio", s.min_lr_ratio);
  s.eval_every_steps = kv.get_uint("train.eval_every_steps", s.eval_every_steps);
  s.validate();
  return s;
}

std::size_t seq_len_at(std::uint64_t tokens_seen, const TrainSchedule& schedule) {
  return tokens_seen < schedule.switch_threshold_tokens ? schedule.seq_len_initial : schedule.seq_len_extended;
}

double lr_at(std::uint64_t step, std::uint64_t total_steps, const TrainSchedule& schedule) {
  if (total_steps == 0) throw ContractError("lr_at: total_steps must be positive");
  const auto warmup = std::max<std::uint64_t>(
      1, static_cast<std::uint64_t>(std::ceil(schedule.warmup_fraction * static_cast<double>(total_steps))));
  if (step < warmup) return schedule.lr * static_cast<double>(step + 1) / static_cast<double>(warmup);
  const double min_lr = schedule.lr * schedule.min_lr_ratio;
  if (total_steps <= warmup + 1) return schedule.lr;
  const double progress =
      std::min(1.0, static_cast<double>(step - warmup) / static_cast<double>(total_steps - 1 - warmup));
  return min_lr + 0.5 * (schedule.lr - min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
StepReport adamw_step(std::span<Tensor<T>> params, AdamWState<T>& state, const AdamWHyper& hyper,
                      std::span<const bool> decay) {
  if (!decay.empty() && decay.size() != params.size()) throw ShapeError("adamw_step: decay mask size mismatch");
  if (!state.m.empty() && (state.m.size() != params.size() || state.v.size() != params.size())) {
    throw ShapeError("adamw_step: optimiser state has " + std::to_string(state.m.size()) + " entries for " +
                     std::to_string(params.size()) + " parameters");
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!state.m.empty() && (state.m[i].size() != params[i].numel() || state.v[i].size() != params[i].numel())) {
      throw ShapeError("adamw_step: moment shape mismatch for parameter " + std::to_string(i));
    }
    if (!params[i].has_grad()) continue;
    for (const T g : params[i].grad()) {
      if (!std::isfinite(static_cast<double>(g))) {
        throw NumericError("adamw_step: non-finite gradient in parameter " + std::to_string(i));
      }
      sq += static_cast<double>(g) * static_cast<double>(g);
    }
  }
  StepReport report;
  report.grad_norm = std::sqrt(sq);
  const double clip = hyper.grad_clip > 0.0 && report.grad_norm > hyper.grad_clip
                          ? hyper.grad_clip / report.grad_norm
                          : 1.0;

  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), T{0});
      state.v.emplace_back(p.numel(), T{0});
    }
  }
  ++state.step;
  const T b1 = static_cast<T>(hyper.beta1);
  const T b2 = static_cast<T>(hyper.beta2);
  const T bc1 = static_cast<T>(1.0 - std::pow(hyper.beta1, static_cast<double>(state.step)));
  const T bc2 = static_cast<T>(1.0 - std::pow(hyper.beta2, static_cast<double>(state.step)));
  const T lr = static_cast<T>(hyper.lr);
  const T eps = static_cast<T>(hyper.eps);
  const T scale = static_cast<T>(clip);

  double clipped_sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto w = params[i].mutable_data();
    const bool has = params[i].has_grad();
    const auto g = has ? params[i].grad() : std::span<const T>{};
    auto& m = state.m[i];
    auto& v = state.v[i];
    const T wd = (decay.empty() || decay[i]) ? static_cast<T>(hyper.weight_decay) : T{0};
    for (std::size_t j = 0; j < w.size(); ++j) {
      const T gj = has ? g[j] * scale : T{0};
      clipped_sq += static_cast<double>(gj) * static_cast<double>(gj);
      m[j] = b1 * m[j] + (T{1} - b1) * gj;
      v[j] = b2 * v[j] + (T{1} - b2) * gj * gj;
      w[j] -= lr * wd * w[j];
      w[j] -= lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps);
    }
  }
  report.clipped_grad_norm = std::sqrt(clipped_sq);
  return report;
}

template StepReport adamw_step<float>(std::span<Tensor<float>>, AdamWState<float>&, const AdamWHyper&,
                                      std::span<const bool>);
template StepReport adamw_step<double>(std::span<Tensor<double>>, AdamWState<double>&, const AdamWHyper&,
                                       std::span<const bool>);

std::vector<TokenId> pack_documents(const Vocabulary& vocab, const std::vector<std::string>& docs) {
  const TokenId eot = vocab.eot_id();
  std::vector<TokenId> out;
  for (const auto& d : docs) {
    const auto ids = vocab.encode(d);
    out.insert(out.end(), ids.begin(), ids.end());
    out.push_back(eot);
  }
  return out;
}

std::string format_metrics_row(const MetricsRow& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.tokens_seen) + "," + std::to_string(r.seq_len) +
                  "," + format_double(r.loss) + "," + format_double(r.lr) + ",";
  if (r.eval_ppl) s += format_double(*r.eval_ppl);
  s += ",";
  if (r.eval_acc) s += format_double(*r.eval_acc);
  return s;
}

MetricsRow parse_metrics_row(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  for (;;) {
    const auto comma = line.find(',', start);
    cells.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  if (cells.size() != 7) throw IoError("metrics row has " + std::to_string(cells.size()) + " fields, expected 7");
  const auto num = [](std::string_view cell, auto& out) {
    const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
    if (ec != std::errc() || p != cell.data() + cell.size()) {
      throw IoError("metrics row has a malformed field '" + std::string(cell) + "'");
    }
  };
  MetricsRow r;
  num(cells[0], r.step);
  num(cells[1], r.tokens_seen);
  num(cells[2], r.seq_len);
  num(cells[3], r.loss);
  num(cells[4], r.lr);
  if (!cells[5].empty()) num(cells[5], r.eval_ppl.emplace());
  if (!cells[6].empty()) num(cells[6], r.eval_acc.emplace());
  return r;
}

fs::path checkpoint_path(const fs::path& dir, std::uint64_t step) {
  std::string digits = std::to_string(step);
  if (digits.size() < 6) digits.insert(0, 6 - digits.size(), '0');
  return dir / ("step_" + digits + ".jckp");
}

namespace {

void write_metrics(const fs::path& path, const std::vector<MetricsRow>& rows) {
  const fs::path tmp = fs::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write metrics to " + tmp.string());
    out << kMetricsHeader << '\n';
    for (const auto& r : rows) out << format_metrics_row(r) << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move metrics into place: " + ec.message());
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::vector<MetricsRow> rows;
  std::ifstream in(path, std::ios::binary);
  if (!in) return rows;
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_metrics_row(line));
  }
  return rows;
}

}  // namespace

TrainResult train(const ModelConfig& config, const Vocabulary& vocab, std::span<const TokenId> stream,
                  const TrainSchedule& schedule, const TrainOptions& options) {
  config.validate();
  schedule.validate();
  if (vocab.size() != config.vocab_size) {
    throw ContractError("train: tokenizer has " + std::to_string(vocab.size()) + " tokens but the model expects " +
                        std::to_string(config.vocab_size));
  }
  if (stream.size() < 2) throw ContractError("train: token stream needs at least two tokens");
  if (schedule.seq_len_initial > config.max_seq_len ||
      (schedule.switch_threshold_tokens < schedule.total_tokens && schedule.seq_len_extended > config.max_seq_len)) {
    throw ContractError("train: schedule sequence length exceeds model max_seq_len " +
                        std::to_string(config.max_seq_len));
  }
  for (const TokenId id : stream) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) throw ContractError("train: token id out of range");
  }
  const std::uint64_t total = options.max_steps > 0 ? options.max_steps : schedule.total_steps();

  TrainResult result;
  AdamWState<float> state;
  std::uint64_t step = 0;
  std::uint64_t cursor = 0;

  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume);
    if (!(ckpt.config == config)) throw ContractError("train: checkpoint model config differs from the run config");
    result.weights = ckpt.weights<float>();
    result.tokens_seen = ckpt.tokens_seen;
    step = ckpt.meta.get_uint("train.step", 0);
    cursor = ckpt.meta.get_uint("train.cursor", 0) % stream.size();
    state.step = ckpt.meta.get_uint("opt.step", 0);
    for (const auto& [name, t] : result.weights.named_parameters()) {
      const auto* m = ckpt.find("opt.m." + name);
      const auto* v = ckpt.find("opt.v." + name);
      if (!m || !v) {
        state = {};
        break;
      }
      state.m.emplace_back(m->data().begin(), m->data().end());
      state.v.emplace_back(v->data().begin(), v->data().end());
    }
    if (!options.metrics_csv.empty()) {
      for (const auto& r : read_metrics(options.metrics_csv)) {
        if (r.step <= step) result.rows.push_back(r);
      }
    }
  } else {
    result.weights = init_weights<float>(config, options.seed);
  }

  const auto named = result.weights.named_parameters();
  std::vector<Tensor<float>> params;
  std::vector<std::string> names;
  // Gains and biases are not decayed.
  std::unique_ptr<bool[]> decay(new bool[named.size()]);
  for (std::size_t i = 0; i < named.size(); ++i) {
    names.push_back(named[i].first);
    params.push_back(named[i].second);
    decay[i] = named[i].second.rank() >= 2;
  }
  result.weights.set_requires_grad(true);

  std::vector<TokenId> eval_stream;
  if (options.eval_texts.empty()) {
    const std::size_t n = std::min<std::size_t>(stream.size(), 4 * config.max_seq_len);
    eval_stream.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(n));
  }
  if (!options.checkpoint_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.checkpoint_dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + options.checkpoint_dir.string());
  }

  std::vector<TokenId> inputs;
  std::vector<TokenId> targets;
  while (step < total) {
    const std::size_t len = seq_len_at(result.tokens_seen, schedule);
    const std::size_t nseq = static_cast<std::size_t>(schedule.batch_token_budget / len);
    result.weights.zero_grad();
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < nseq; ++s) {
      inputs.resize(len);
      targets.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        inputs[i] = stream[(cursor + i) % stream.size()];
        targets[i] = stream[(cursor + i + 1) % stream.size()];
      }
      cursor = (cursor + len) % stream.size();
      const auto logits = decoder_forward<float>(inputs, config, result.weights);
      const auto loss = cross_entropy(logits, targets);
      if (!std::isfinite(loss.item())) {
        throw NumericError("train: non-finite loss at step " + std::to_string(step + 1));
      }
      loss_sum += static_cast<double>(loss.item());
      backward(scale(loss, 1.0f / static_cast<float>(nseq)));
    }
    const double lr = lr_at(step, total, schedule);
    const AdamWHyper hyper{lr, schedule.beta1, schedule.beta2, schedule.eps, schedule.weight_decay, schedule.grad_clip};
    adamw_step<float>(params, state, hyper, std::span<const bool>(decay.get(), named.size()));
    ++step;
    result.tokens_seen += static_cast<std::uint64_t>(nseq) * len;

    MetricsRow row{step, result.tokens_seen, len, loss_sum / static_cast<double>(nseq), lr, std::nullopt, std::nullopt};
    const bool milestone = step % schedule.eval_every_steps == 0 || step == total;
    if (milestone) {
      NoGradGuard no_grad;
      row.eval_ppl = options.eval_texts.empty() ? evaluate_ppl_tokens(config, result.weights, eval_stream)
                                                : evaluate_ppl(config, result.weights, vocab, options.eval_texts);
      if (!options.eval_mc.empty()) {
        row.eval_acc = evaluate_multichoice(config, result.weights, vocab, options.eval_mc).accuracy;
      }
    }
    result.rows.push_back(row);

    if (milestone) {
      if (!options.checkpoint_dir.empty()) {
        Checkpoint ckpt = Checkpoint::from_weights(config, result.weights, result.tokens_seen);
        ckpt.meta.set("train.step", std::to_string(step));
        ckpt.meta.set("train.cursor", std::to_string(cursor));
        ckpt.meta.set("train.seed", std::to_string(options.seed));
        ckpt.meta.set("opt.step", std::to_string(state.step));
        schedule.write_to(ckpt.meta);
        for (std::size_t i = 0; i < params.size(); ++i) {
          ckpt.tensors.emplace_back("opt.m." + names[i], Tensor<float>(params[i].shape(), state.m[i]));
          ckpt.tensors.emplace_back("opt.v." + names[i], Tensor<float>(params[i].shape(), state.v[i]));
        }
        save_checkpoint(checkpoint_path(options.checkpoint_dir, step), ckpt);
      }
      if (!options.metrics_csv.empty()) write_metrics(options.metrics_csv, result.rows);
    }
  }
  if (!options.metrics_csv.empty()) write_metrics(options.metrics_csv, result.rows);
  result.weights.set_requires_grad(false);
  return result;
}

}  // namespace jiang
