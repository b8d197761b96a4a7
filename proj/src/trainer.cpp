#include "ltssl/trainer.hpp"

#include "ltssl/augment.hpp"
#include "ltssl/checkpoint.hpp"
#include "ltssl/errors.hpp"
#include "ltssl/format.hpp"
#include "ltssl/triplet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numbers>
#include <sstream>

namespace ltssl {

namespace {

constexpr int kEvalChunk = 256;

std::string opt6(const std::optional<double>& v) { return v ? fixed6(*v) : std::string(); }

template <typename Sample>
RowMatrix predict_chunks(const SmallConvNet& net, const ModelParams& params,
                         std::span<const Sample> samples) {
  const auto& arch = net.config();
  RowMatrix out(static_cast<Eigen::Index>(samples.size()), arch.num_classes);
  for (std::size_t start = 0; start < samples.size(); start += kEvalChunk) {
    const int n = static_cast<int>(std::min<std::size_t>(kEvalChunk, samples.size() - start));
    ImageBatch batch(n, arch.image_height, arch.image_width);
    for (int i = 0; i < n; ++i) {
      const auto& px = samples[start + static_cast<std::size_t>(i)].pixels;
      if (px.size() != batch.image_size()) throw DataError("sample size does not match the model");
      std::copy(px.begin(), px.end(), batch.image(i).begin());
    }
    out.middleRows(static_cast<Eigen::Index>(start), n) = net.forward(params, batch).logits;
  }
  return out;
}

int argmax_row(const RowMatrix& m, Eigen::Index r) {
  Eigen::Index best = 0;
  m.row(r).maxCoeff(&best);
  return static_cast<int>(best);
}

// Rows of `z` scaled to unit length; `norms` receives the original lengths.
RowMatrix normalize_rows(const RowMatrix& z, std::vector<double>& norms) {
  RowMatrix out = z;
  norms.resize(static_cast<std::size_t>(z.rows()));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double n = std::max(z.row(i).norm(), 1e-12);
    norms[static_cast<std::size_t>(i)] = n;
    out.row(i) /= n;
  }
  return out;
}

}  // namespace

TrainState init_state(const TrainConfig& cfg, const SmallConvNet& net) {
  TrainState s;
  s.seed = cfg.seed;
  s.params = net.init_params(make_stream(cfg.seed, StreamTag::kInit)());
  s.momentum = s.params.zeros_like();
  s.ema.shadow = s.params;
  s.ema.decay = cfg.ema_decay;
  s.prior = ClassPriorEMA(cfg.num_classes, cfg.prior_decay);
  return s;
}

double lr_schedule(std::int64_t iteration, std::int64_t total, double base, Schedule schedule) {
  if (schedule == Schedule::kConstant || total <= 0) return base;
  const double t = static_cast<double>(std::clamp<std::int64_t>(iteration, 0, total));
  return base * std::cos(7.0 * std::numbers::pi * t / (16.0 * static_cast<double>(total)));
}

StepInputs draw_step_inputs(const TrainConfig& cfg, const DatasetSplit& split,
                            std::int64_t iteration) {
  const BatchDraw draw = sample_batches(split, cfg.batch_plan(), cfg.seed, iteration);
  StepInputs in;
  for (auto i : draw.labeled) in.labeled.push_back(&split.labeled[i]);
  for (auto i : draw.unlabeled) in.unlabeled.push_back(&split.unlabeled[i]);
  return in;
}

StepGradient step_gradient(const TrainConfig& cfg, const SmallConvNet& net, const TrainState& state,
                           const StepInputs& inputs) {
  const auto& arch = net.config();
  const int h = arch.image_height, w = arch.image_width, k = arch.num_classes;
  const int nl = static_cast<int>(inputs.labeled.size());
  const int nu = static_cast<int>(inputs.unlabeled.size());
  if (nl == 0) throw DataError("a training step needs at least one labeled sample");
  const std::int64_t it = state.iteration;

  StepGradient out;
  out.prior = state.prior;
  StepMetrics& m = out.metrics;
  m.step = it;
  m.lr = lr_schedule(it, cfg.iterations, cfg.lr, cfg.schedule);

  const bool use_unlabeled = nu > 0 && (cfg.lambda_u > 0.0 || cfg.lambda_ahtl > 0.0);
  const int rows = nl + (use_unlabeled ? nu : 0);

  // Rows [0, nl) are weak labeled views, rows [nl, nl + nu) strong unlabeled views.
  ImageBatch train_batch(rows, h, w);
  std::vector<int> labels(static_cast<std::size_t>(nl));
  for (int i = 0; i < nl; ++i) {
    const ImageSample& s = *inputs.labeled[static_cast<std::size_t>(i)];
    if (!s.label) throw DataError("labeled sample " + std::to_string(s.id) + " has no label");
    labels[static_cast<std::size_t>(i)] = *s.label;
    Rng rng = augment_stream(cfg.seed, StreamTag::kAugLabeled, s.id, it);
    const auto v = weak(s.pixels, h, w, cfg.augment, rng);
    std::copy(v.begin(), v.end(), train_batch.image(i).begin());
  }

  ImageBatch weak_u(nu, h, w);
  std::vector<std::uint32_t> ids(static_cast<std::size_t>(nu));
  for (int j = 0; j < nu; ++j) {
    const UnlabeledSample& s = *inputs.unlabeled[static_cast<std::size_t>(j)];
    ids[static_cast<std::size_t>(j)] = s.id;
    Rng rng = augment_stream(cfg.seed, StreamTag::kAugUnlabeled, s.id, it);
    const AugmentedPair pair = augment_pair(s.id, s.pixels, h, w, cfg.augment, rng);
    std::copy(pair.weak.begin(), pair.weak.end(), weak_u.image(j).begin());
    if (use_unlabeled) std::copy(pair.strong.begin(), pair.strong.end(), train_batch.image(nl + j).begin());
  }

  // Weak unlabeled branch: no gradient flows through it.
  Selection sel;
  ForwardOutput weak_out;
  if (nu > 0) {
    weak_out = net.forward(state.params, weak_u);
    sel = select(weak_out.logits, ids, cfg.selection, it);
    out.prior.update(softmax_rows(weak_out.logits));
    double lo = sel.energy.front(), sum = 0.0;
    for (double e : sel.energy) {
      lo = std::min(lo, e);
      sum += e;
    }
    m.min_energy = lo;
    m.mean_energy = sum / nu;
    m.selected = sel.selected_count();
  }
  const MarginVector margin = margins(out.prior, cfg.lambda_margin);

  ForwardCache cache;
  const ForwardOutput fwd = net.forward(state.params, train_batch, cache);

  RowMatrix dlogits = RowMatrix::Zero(rows, k);
  const LogitLoss sup = ce_supervised(fwd.logits.topRows(nl), labels);
  dlogits.topRows(nl) = sup.dlogits;

  double lu = 0.0;
  if (use_unlabeled && cfg.lambda_u > 0.0) {
    const LogitLoss uns = unsup_loss(fwd.logits.bottomRows(nu), sel.predicted, sel.mask, margin);
    lu = uns.value;
    dlogits.bottomRows(nu) = cfg.lambda_u * uns.dlogits;
  }

  double lt = 0.0;
  RowMatrix dembedding;
  if (use_unlabeled && cfg.lambda_ahtl > 0.0 && sel.selected_count() >= 2) {
    const auto d = fwd.embedding.cols();
    const auto ns = static_cast<Eigen::Index>(sel.selected_count());
    std::vector<std::size_t> rows_sel;
    std::vector<std::uint32_t> sel_ids;
    std::vector<int> sel_cls;
    RowMatrix weak_emb(ns, d), strong_emb(ns, d);
    for (int j = 0; j < nu; ++j) {
      if (!sel.mask[static_cast<std::size_t>(j)]) continue;
      const auto r = static_cast<Eigen::Index>(rows_sel.size());
      weak_emb.row(r) = weak_out.embedding.row(j);
      strong_emb.row(r) = fwd.embedding.row(nl + j);
      rows_sel.push_back(static_cast<std::size_t>(j));
      sel_ids.push_back(ids[static_cast<std::size_t>(j)]);
      sel_cls.push_back(sel.predicted[static_cast<std::size_t>(j)]);
    }
    std::vector<double> strong_norms;
    if (cfg.normalize_embeddings) {
      std::vector<double> unused;
      weak_emb = normalize_rows(weak_emb, unused);
      strong_emb = normalize_rows(strong_emb, strong_norms);
    }
    const TripletBatch tb = mine_hard(sel_ids, sel_cls, weak_emb, strong_emb);
    const TripletLoss tl = ahtl(tb, triplet_weights(tb), cfg.triplet_margin);
    lt = tl.value;
    m.triplets = tb.size();
    m.active = tl.active;
    if (tb.size() > 0) {
      m.mean_ap = tl.mean_ap;
      m.mean_an = tl.mean_an;
    }
    // Gradient w.r.t. the (possibly normalized) strong embeddings; anchors are detached.
    RowMatrix dstrong = RowMatrix::Zero(ns, d);
    for (std::size_t t = 0; t < tb.size(); ++t) {
      const auto r = static_cast<Eigen::Index>(t);
      dstrong.row(static_cast<Eigen::Index>(tb.positive[t])) += tl.dpositive.row(r);
      dstrong.row(static_cast<Eigen::Index>(tb.negative[t])) += tl.dnegative.row(r);
    }
    dembedding = RowMatrix::Zero(rows, d);
    for (Eigen::Index r = 0; r < ns; ++r) {
      Eigen::RowVectorXd g = dstrong.row(r);
      if (cfg.normalize_embeddings) {
        const auto u = strong_emb.row(r);
        g = (g - g.dot(u) * u) / strong_norms[static_cast<std::size_t>(r)];
      }
      dembedding.row(nl + static_cast<Eigen::Index>(rows_sel[static_cast<std::size_t>(r)])) =
          cfg.lambda_ahtl * g;
    }
  }

  m.loss = total_loss(sup.value, lu, lt, cfg.lambda_u, cfg.lambda_ahtl);
  out.grad = net.backward(state.params, cache, dlogits, dembedding);
  if (!out.grad.all_finite()) throw NumericFault("gradient", "non-finite parameter gradient");
  double sq = 0.0;
  for (const auto& t : out.grad)
    for (double v : t.values()) sq += v * v;
  m.grad_norm = std::sqrt(sq);
  return out;
}

void apply_update(const TrainConfig& cfg, TrainState& state, const StepGradient& step) {
  ModelParams g = step.grad;
  if (cfg.grad_clip > 0.0 && step.metrics.grad_norm > cfg.grad_clip)
    g.scale(cfg.grad_clip / step.metrics.grad_norm);
  if (cfg.weight_decay > 0.0) g.axpy(cfg.weight_decay, state.params);
  state.momentum.scale(cfg.momentum);
  state.momentum.axpy(1.0, g);
  state.params.axpy(-step.metrics.lr, state.momentum);
  if (!state.params.all_finite()) throw NumericFault("update", "non-finite parameters after update");
  ema_update(state.ema, state.params);
  state.prior = step.prior;
  ++state.iteration;
}

StepMetrics train_step(const TrainConfig& cfg, const SmallConvNet& net, TrainState& state,
                       const StepInputs& inputs) {
  StepGradient step = step_gradient(cfg, net, state, inputs);
  apply_update(cfg, state, step);
  return step.metrics;
}

RowMatrix predict_logits(const SmallConvNet& net, const ModelParams& params,
                         std::span<const ImageSample> samples) {
  return predict_chunks(net, params, samples);
}

RowMatrix predict_logits(const SmallConvNet& net, const ModelParams& params,
                         std::span<const UnlabeledSample> samples) {
  return predict_chunks(net, params, samples);
}

ConfusionMatrix evaluate(const SmallConvNet& net, const ModelParams& params,
                         std::span<const ImageSample> test) {
  const RowMatrix logits = predict_logits(net, params, test);
  ConfusionMatrix cm(net.config().num_classes);
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].label) throw DataError("test sample " + std::to_string(test[i].id) + " has no label");
    cm.add(*test[i].label, argmax_row(logits, static_cast<Eigen::Index>(i)));
  }
  return cm;
}

Selection select_unlabeled(const SmallConvNet& net, const ModelParams& params,
                           const DatasetSplit& split, const SelectionConfig& gate,
                           std::int64_t iteration) {
  const RowMatrix logits = predict_logits(net, params, split.unlabeled);
  std::vector<std::uint32_t> ids;
  ids.reserve(split.unlabeled.size());
  for (const auto& s : split.unlabeled) ids.push_back(s.id);
  return select(logits, ids, gate, iteration);
}

std::string metrics_csv_header() {
  return "step,lr,loss_s,loss_u,loss_ahtl,loss_total,selected,min_energy,mean_energy,"
         "triplets,active_fraction,mean_d_ap,mean_d_an,grad_norm\n";
}

namespace {

std::string metrics_row(const StepMetrics& m) {
  std::ostringstream os;
  os << m.step << ',' << fixed6(m.lr) << ',' << fixed6(m.loss.supervised) << ','
     << fixed6(m.loss.unsupervised) << ',' << fixed6(m.loss.triplet) << ',' << fixed6(m.loss.total)
     << ',' << m.selected << ',' << opt6(m.min_energy) << ',' << opt6(m.mean_energy) << ','
     << m.triplets << ','
     << (m.triplets > 0 ? fixed6(static_cast<double>(m.active) / static_cast<double>(m.triplets))
                        : std::string())
     << ',' << opt6(m.mean_ap) << ',' << opt6(m.mean_an) << ',' << fixed6(m.grad_norm) << '\n';
  return os.str();
}

std::string eval_header(int k) {
  std::string s = "step,accuracy,head_recall,tail_recall";
  for (int c = 0; c < k; ++c) s += ",recall_" + std::to_string(c);
  return s + ",pl_selected,pl_precision,pl_recall\n";
}

std::string eval_row(const EvalPoint& e) {
  std::ostringstream os;
  os << e.step << ',' << fixed6(e.accuracy) << ',' << opt6(e.head_recall) << ','
     << opt6(e.tail_recall);
  for (const auto& r : e.recall) os << ',' << opt6(r);
  os << ',' << e.pseudo.selected << ',' << opt6(e.pseudo.precision) << ','
     << opt6(e.pseudo.recall) << '\n';
  return os.str();
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(line);
  while (std::getline(is, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_opt(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return std::stod(s);
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) return {};
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write '" + p.string() + "'");
  os << text;
}

// Keeps the header plus the lines for which `keep(line)` holds.
std::string filter_lines(const std::string& text, bool has_header,
                         const std::function<bool(const std::string&)>& keep) {
  std::istringstream is(text);
  std::string line, out;
  bool first = has_header;
  while (std::getline(is, line)) {
    if (first || keep(line)) out += line + "\n";
    first = false;
  }
  return out;
}

Checkpoint make_checkpoint(const TrainConfig& cfg, const TrainState& s) {
  Checkpoint ck;
  ck.fingerprint = cfg.fingerprint();
  ck.iteration = s.iteration;
  ck.put("params", s.params);
  ck.put("ema", s.ema.shadow);
  ck.put("momentum", s.momentum);
  const auto& p = s.prior.probabilities();
  ck.put("prior", {static_cast<int>(p.size())}, std::vector<float>(p.begin(), p.end()));
  return ck;
}

void restore_checkpoint(const Checkpoint& ck, TrainState& s) {
  ck.get("params", s.params);
  ck.get("ema", s.ema.shadow);
  ck.get("momentum", s.momentum);
  const NamedArray* prior = ck.find("prior");
  if (!prior || prior->values.size() != s.prior.probabilities().size())
    throw ConfigError("checkpoint has no usable 'prior' array");
  std::vector<double> p(prior->values.begin(), prior->values.end());
  s.prior.assign(p);
  s.iteration = ck.iteration;
}

}  // namespace

FitResult fit(const TrainConfig& cfg, const DatasetSplit& split, const FitOptions& options) {
  cfg.validate();
  if (split.num_classes != cfg.num_classes)
    throw ConfigError("config num_classes does not match the dataset");
  if (split.height != cfg.image_size || split.width != cfg.image_size)
    throw ConfigError("config image_size does not match the dataset");
  if (split.labeled.empty()) throw DataError("the labeled split is empty");

  const SmallConvNet net(cfg.arch());
  const bool to_disk = !options.out_dir.empty();
  const auto path = [&](const char* name) { return options.out_dir / name; };
  if (to_disk) std::filesystem::create_directories(options.out_dir);

  FitResult res;
  res.state = init_state(cfg, net);
  res.metrics_csv = metrics_csv_header();
  res.eval_csv = eval_header(cfg.num_classes);
  res.best_accuracy = -1.0;
  const auto train_counts = split.labeled_class_counts();
  const int k = cfg.num_classes;

  if (options.resume && to_disk && std::filesystem::exists(path("last.ckpt"))) {
    const Checkpoint ck = read_checkpoint(path("last.ckpt"));
    if (ck.fingerprint != cfg.fingerprint())
      throw ConfigError("last.ckpt was written by a different config (" + ck.fingerprint + ")");
    restore_checkpoint(ck, res.state);
    const std::int64_t at = res.state.iteration;
    const auto step_of = [](const std::string& line) { return std::stoll(line.substr(0, line.find(','))); };
    res.metrics_csv = filter_lines(read_text(path("metrics.csv")), true,
                                   [&](const std::string& l) { return step_of(l) < at; });
    res.eval_csv = filter_lines(read_text(path("eval.csv")), true,
                                [&](const std::string& l) { return step_of(l) <= at; });
    std::istringstream rows(res.eval_csv);
    std::string line;
    std::getline(rows, line);
    while (std::getline(rows, line)) {
      const auto f = split_fields(line);
      if (static_cast<int>(f.size()) != 4 + k + 3) throw DataError("eval.csv has an unexpected row");
      EvalPoint e;
      e.step = std::stoll(f[0]);
      e.accuracy = std::stod(f[1]);
      e.head_recall = parse_opt(f[2]);
      e.tail_recall = parse_opt(f[3]);
      for (int c = 0; c < k; ++c) e.recall.push_back(parse_opt(f[static_cast<std::size_t>(4 + c)]));
      e.pseudo.step = e.step;
      e.pseudo.selected = std::stoull(f[static_cast<std::size_t>(4 + k)]);
      e.pseudo.precision = parse_opt(f[static_cast<std::size_t>(5 + k)]);
      e.pseudo.recall = parse_opt(f[static_cast<std::size_t>(6 + k)]);
      if (e.accuracy > res.best_accuracy) {
        res.best_accuracy = e.accuracy;
        res.best_step = e.step;
      }
      res.evals.push_back(std::move(e));
    }
    const auto epochs = static_cast<std::int64_t>(res.evals.size());
    res.audit_jsonl = filter_lines(read_text(path("audit.jsonl")), false, [&](const std::string& l) {
      return nlohmann::json::parse(l).at("epoch").get<std::int64_t>() < epochs;
    });
  }

  std::vector<PseudoLabelPoint> trajectory;
  for (const auto& e : res.evals) trajectory.push_back(e.pseudo);

  const auto run_eval = [&](TrainState& s) {
    const ConfusionMatrix cm = evaluate(net, s.ema.shadow, split.test);
    const MetricsReport r = summarize(cm, train_counts, {}, "", options.tail_count);
    EvalPoint e;
    e.step = s.iteration;
    e.accuracy = r.overall_accuracy;
    e.head_recall = r.head_recall;
    e.tail_recall = r.tail_recall;
    e.recall = r.per_class_recall;

    // Pseudo-label audit of the live model on unaugmented unlabeled data.
    const Selection sel = select_unlabeled(net, s.params, split, cfg.selection, s.iteration);
    const AuditTable table = audit(sel.records, split.hidden, k);
    e.pseudo = {s.iteration, sel.selected_count(), table.precision, table.recall};
    std::ostringstream audit_os;
    write_audit_jsonl(audit_os, static_cast<std::int64_t>(res.evals.size()), table);
    res.audit_jsonl += audit_os.str();
    res.eval_csv += eval_row(e);
    trajectory.push_back(e.pseudo);

    if (options.progress)
      *options.progress << "step " << e.step << "/" << cfg.iterations << "  acc "
                        << fixed6(e.accuracy) << "  tail " << opt6(e.tail_recall) << "  pl_selected "
                        << e.pseudo.selected << "  pl_precision " << opt6(e.pseudo.precision)
                        << std::endl;

    const bool best = e.accuracy > res.best_accuracy;
    if (best) {
      res.best_accuracy = e.accuracy;
      res.best_step = e.step;
    }
    res.evals.push_back(std::move(e));
    if (to_disk) {
      const Checkpoint ck = make_checkpoint(cfg, s);
      if (best) write_checkpoint(path("best.ckpt"), ck);
      write_checkpoint(path("last.ckpt"), ck);
      write_text(path("metrics.csv"), res.metrics_csv);
      write_text(path("eval.csv"), res.eval_csv);
      write_text(path("audit.jsonl"), res.audit_jsonl);
    }
  };

  if (to_disk) cfg.save(path("config.json"));
  TrainState& s = res.state;
  if (res.evals.empty()) run_eval(s);
  while (s.iteration < cfg.iterations) {
    const StepInputs in = draw_step_inputs(cfg, split, s.iteration);
    const StepMetrics m = train_step(cfg, net, s, in);
    res.metrics_csv += metrics_row(m);
    if (s.iteration % cfg.eval_interval == 0 || s.iteration == cfg.iterations) run_eval(s);
  }

  res.report = summarize(evaluate(net, s.ema.shadow, split.test), train_counts, trajectory,
                         cfg.fingerprint(), options.tail_count);
  if (to_disk) {
    write_checkpoint(path("final.ckpt"), make_checkpoint(cfg, s));
    write_text(path("metrics.csv"), res.metrics_csv);
    write_text(path("report.json"), dump_json(res.report.to_json()) + "\n");
  }
  return res;
}

}  // namespace ltssl
