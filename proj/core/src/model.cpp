#include "tsfm/model.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "tsfm/errors.hpp"

namespace tsfm {

using nlohmann::json;

void TimerConfig::validate() const {
  if (token_len < 1) raise(errc::invalid_config, "token_len must be >= 1");
  if (d_model < 2 || d_model % 2 != 0)
    raise(errc::invalid_config, "d_model must be a positive even number");
  if (n_heads < 1 || d_model % n_heads != 0)
    raise(errc::invalid_config, "d_model must be divisible by n_heads");
  if (n_blocks < 1) raise(errc::invalid_config, "n_blocks must be >= 1");
  if (ffn_mult < 1) raise(errc::invalid_config, "ffn_mult must be >= 1");
  if (dropout_p < 0.0 || dropout_p >= 1.0) raise(errc::invalid_config, "dropout_p in [0,1)");
  if (max_tokens < 1) raise(errc::invalid_config, "max_tokens must be >= 1");
  if (phi_hidden < 1) raise(errc::invalid_config, "phi_hidden must be >= 1");
  if (n_features < 1) raise(errc::invalid_config, "n_features must be >= 1");
}

std::string TimerConfig::to_json() const {
  json j;
  j["token_len"] = token_len;
  j["d_model"] = d_model;
  j["n_blocks"] = n_blocks;
  j["n_heads"] = n_heads;
  j["ffn_mult"] = ffn_mult;
  j["dropout_p"] = dropout_p;
  j["max_tokens"] = max_tokens;
  j["phi_hidden"] = phi_hidden;
  j["n_features"] = n_features;
  return j.dump();
}

TimerConfig TimerConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    raise(errc::invalid_config, std::string("model config: ") + e.what());
  }
  TimerConfig c;
  c.token_len = j.value("token_len", c.token_len);
  c.d_model = j.value("d_model", c.d_model);
  c.n_blocks = j.value("n_blocks", c.n_blocks);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
  c.dropout_p = j.value("dropout_p", c.dropout_p);
  c.max_tokens = j.value("max_tokens", c.max_tokens);
  c.phi_hidden = j.value("phi_hidden", c.phi_hidden);
  c.n_features = j.value("n_features", c.n_features);
  c.validate();
  return c;
}

TokenizedSeries tokenize(std::span<const double> y, int token_len) {
  if (y.empty()) raise(errc::empty_input, "tokenize: empty series");
  if (token_len < 1) raise(errc::invalid_config, "tokenize: token_len must be >= 1");
  const auto s = static_cast<int64_t>(token_len);
  const auto len = static_cast<int64_t>(y.size());
  const int64_t pad = (s - len % s) % s;
  const int64_t n = (len + pad) / s;
  Tensor tokens({n, s});
  for (int64_t i = 0; i < pad; ++i) tokens[i] = y[0];
  for (int64_t i = 0; i < len; ++i) tokens[pad + i] = y[static_cast<size_t>(i)];
  return TokenizedSeries{std::move(tokens), static_cast<int>(pad)};
}

Tensor temporal_encoding(int64_t pos, int d_model, int64_t max_tokens) {
  if (pos < 0 || pos >= max_tokens)
    raise(errc::position_out_of_range,
          "temporal encoding position " + std::to_string(pos) + " outside [0," +
              std::to_string(max_tokens) + ")");
  Tensor te({static_cast<int64_t>(d_model)});
  for (int k = 0; 2 * k < d_model; ++k) {
    const double freq = std::pow(10000.0, -2.0 * k / static_cast<double>(d_model));
    te[2 * k] = std::sin(static_cast<double>(pos) * freq);
    if (2 * k + 1 < d_model) te[2 * k + 1] = std::cos(static_cast<double>(pos) * freq);
  }
  return te;
}

Tensor temporal_encoding_table(int64_t n, int d_model) {
  Tensor table({n, static_cast<int64_t>(d_model)});
  for (int64_t i = 0; i < n; ++i) {
    const Tensor row = temporal_encoding(i, d_model, n);
    std::copy(row.data(), row.data() + d_model, table.data() + i * d_model);
  }
  return table;
}

Tensor perturb_embeddings(const Tensor& z, double sigma, Rng& rng) {
  if (sigma < 0.0) raise(errc::invalid_config, "perturb_embeddings: sigma must be >= 0");
  Tensor out = z;
  if (sigma == 0.0) return out;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += sigma * rng.normal();
  return out;
}

// ---------------------------------------------------------------------------
// TimerModel

Parameter* TimerModel::add_param(const std::string& name, Tensor value, bool trainable) {
  params_.push_back(std::make_unique<Parameter>(Parameter{name, std::move(value), trainable}));
  index_.emplace_back(name, params_.size() - 1);
  return params_.back().get();
}

void TimerModel::rebuild_index() {
  index_.clear();
  for (size_t i = 0; i < params_.size(); ++i) index_.emplace_back(params_[i]->name, i);
}

TimerModel::TimerModel(TimerConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  te_ = temporal_encoding_table(cfg_.max_tokens, cfg_.d_model);
  Rng rng(seed_for(seed, "timer-init"));
  const auto D = static_cast<int64_t>(cfg_.d_model);
  const auto S = static_cast<int64_t>(cfg_.token_len);
  const auto F = static_cast<int64_t>(cfg_.ffn_mult) * D;
  const auto C = static_cast<int64_t>(cfg_.n_features);
  const auto H = static_cast<int64_t>(cfg_.phi_hidden);

  auto normal_init = [&](std::vector<int64_t> shape) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.size(); ++i) t[i] = 0.02 * rng.normal();
    return t;
  };

  add_param("embed.w", normal_init({S, D}));
  add_param("embed.b", Tensor::zeros({D}));
  for (int l = 0; l < cfg_.n_blocks; ++l) {
    const std::string p = "block" + std::to_string(l);
    add_param(p + ".ln1.g", Tensor::full({D}, 1.0));
    add_param(p + ".ln1.b", Tensor::zeros({D}));
    for (const char* w : {"wq", "wk", "wv", "wo"}) {
      add_param(p + ".attn." + w, normal_init({D, D}));
      add_param(p + ".attn.b" + std::string(1, w[1]), Tensor::zeros({D}));
    }
    add_param(p + ".ln2.g", Tensor::full({D}, 1.0));
    add_param(p + ".ln2.b", Tensor::zeros({D}));
    add_param(p + ".ffn.w1", normal_init({D, F}));
    add_param(p + ".ffn.b1", Tensor::zeros({F}));
    add_param(p + ".ffn.w2", normal_init({F, D}));
    add_param(p + ".ffn.b2", Tensor::zeros({D}));
  }
  add_param("final_norm.g", Tensor::full({D}, 1.0));
  add_param("final_norm.b", Tensor::zeros({D}));
  add_param("head.w", normal_init({D, S}));
  add_param("head.b", Tensor::zeros({S}));
  add_param("phi.w1", normal_init({C, H}));
  add_param("phi.b1", Tensor::zeros({H}));
  add_param("phi.w2", normal_init({H, D}));
  add_param("phi.b2", Tensor::zeros({D}));
}

std::vector<Parameter*> TimerModel::parameters() const {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> TimerModel::trainable_parameters() const {
  std::vector<Parameter*> out;
  for (const auto& p : params_)
    if (p->trainable) out.push_back(p.get());
  return out;
}

Parameter* TimerModel::param(const std::string& name) const {
  for (const auto& [n, i] : index_)
    if (n == name) return params_[i].get();
  return nullptr;
}

int64_t TimerModel::trainable_parameter_count() const {
  int64_t n = 0;
  for (const auto& p : params_)
    if (p->trainable) n += p->value.size();
  return n;
}

const LoraConfig& TimerModel::lora_config() const {
  if (!lora_) raise(errc::not_applied, "no LoRA adapters present");
  return *lora_;
}

namespace {
std::vector<std::string> lora_targets(const TimerConfig& cfg, const LoraConfig& lc) {
  std::vector<std::string> targets;
  for (int l = 0; l < cfg.n_blocks; ++l) {
    const std::string p = "block" + std::to_string(l) + ".attn.";
    if (lc.target_query) targets.push_back(p + "wq");
    if (lc.target_value) targets.push_back(p + "wv");
  }
  return targets;
}
}  // namespace

void TimerModel::apply_lora(const LoraConfig& lc) {
  if (lora_) raise(errc::already_applied, "LoRA adapters already applied");
  if (lc.rank < 1) raise(errc::invalid_config, "LoRA rank must be >= 1");
  if (!(lc.alpha > 0.0)) raise(errc::invalid_config, "LoRA alpha must be > 0");
  if (!lc.target_query && !lc.target_value)
    raise(errc::invalid_config, "LoRA needs at least one target projection");

  // Freeze the backbone; the physics encoder stays trainable alongside the
  // adapters.
  for (auto& p : params_) p->trainable = p->name.rfind("phi.", 0) == 0;

  const auto D = static_cast<int64_t>(cfg_.d_model);
  const auto r = static_cast<int64_t>(lc.rank);
  for (const std::string& target : lora_targets(cfg_, lc)) {
    Rng rng(seed_for(0x107A, target.c_str(), static_cast<uint64_t>(lc.rank)));
    Tensor a({r, D});
    for (int64_t i = 0; i < a.size(); ++i) a[i] = 0.02 * rng.normal();
    add_param(target + ".lora_a", std::move(a));
    add_param(target + ".lora_b", Tensor::zeros({D, r}));  // zero init: identity delta
  }
  lora_ = lc;
}

void TimerModel::merge_lora() {
  if (!lora_) raise(errc::not_applied, "merge_lora without adapters");
  const double scaling = lora_->alpha / static_cast<double>(lora_->rank);
  for (const std::string& target : lora_targets(cfg_, *lora_)) {
    Parameter* w = param(target);
    Parameter* a = param(target + ".lora_a");
    Parameter* b = param(target + ".lora_b");
    const int64_t r = a->value.dim(0), din = a->value.dim(1), dout = b->value.dim(0);
    Tensor ba({dout, din});
    detail::mm_acc(b->value.data(), a->value.data(), ba.data(), dout, r, din);
    for (int64_t i = 0; i < din; ++i)
      for (int64_t j = 0; j < dout; ++j) w->value.at(i, j) += scaling * ba.at(j, i);
  }
  std::erase_if(params_, [](const std::unique_ptr<Parameter>& p) {
    return p->name.find(".lora_") != std::string::npos;
  });
  for (auto& p : params_) p->trainable = true;
  rebuild_index();
  lora_.reset();
}

Tensor TimerModel::forward_tokens(const Tensor& tokens) const {
  Tape tape;
  ModelGraph g(tape, *this, false);
  return tape.value(g.decode_tokens(tokens));
}

std::vector<double> TimerModel::autoregressive_forecast(std::span<const double> history,
                                                        int steps) const {
  if (history.empty()) raise(errc::empty_history, "autoregressive_forecast");
  if (steps < 1) raise(errc::invalid_config, "forecast steps must be >= 1");
  const int S = cfg_.token_len;
  const size_t cap = static_cast<size_t>(cfg_.max_tokens) * static_cast<size_t>(S);
  std::vector<double> hist(history.begin(), history.end());
  std::vector<double> out;
  const int n_steps = (steps + S - 1) / S;
  for (int k = 0; k < n_steps; ++k) {
    const size_t take = std::min(hist.size(), cap);
    const std::span<const double> tail(hist.data() + hist.size() - take, take);
    const TokenizedSeries ts = tokenize(tail, S);
    const Tensor preds = forward_tokens(ts.tokens);
    const int64_t last = ts.tokens.dim(0) - 1;
    for (int j = 0; j < S; ++j) {
      const double v = preds.at(last, j);
      hist.push_back(v);
      out.push_back(v);
    }
  }
  out.resize(static_cast<size_t>(steps));
  return out;
}

double TimerModel::forecasting_loss_value(std::span<const double> y) const {
  Tape tape;
  ModelGraph g(tape, *this, false);
  return tape.value(g.forecasting_loss(tokenize(y, cfg_.token_len))).scalar_value();
}

std::pair<double, double> TimerModel::triplet_similarities(const Triplet& t) const {
  Tape tape;
  ModelGraph g(tape, *this, false);
  const Var za = g.physics_embedding(t.anchor);
  const Var zp = g.physics_embedding(t.positive);
  const Var zn = g.physics_embedding(t.negative);
  const double s_ap = tape.value(tape.cosine_similarity(za, zp)).scalar_value();
  const double s_an = tape.value(tape.cosine_similarity(za, zn)).scalar_value();
  return {s_ap, s_an};
}

std::string TimerModel::config_blob() const {
  json j;
  j["timer"] = json::parse(cfg_.to_json());
  if (lora_) {
    j["lora"] = {{"rank", lora_->rank},
                 {"alpha", lora_->alpha},
                 {"target_query", lora_->target_query},
                 {"target_value", lora_->target_value}};
  } else {
    j["lora"] = nullptr;
  }
  return j.dump();
}

std::vector<std::pair<std::string, Tensor>> TimerModel::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.emplace_back(p->name, p->value);
  return out;
}

TimerModel TimerModel::from_checkpoint(
    const std::string& config_blob, const std::vector<std::pair<std::string, Tensor>>& tensors) {
  json j;
  try {
    j = json::parse(config_blob);
  } catch (const json::exception& e) {
    raise(errc::corrupt_file, std::string("checkpoint config: ") + e.what());
  }
  if (!j.contains("timer")) raise(errc::corrupt_file, "checkpoint config missing 'timer'");
  TimerModel m(TimerConfig::from_json(j["timer"].dump()), 0);
  if (j.contains("lora") && !j["lora"].is_null()) {
    LoraConfig lc;
    lc.rank = j["lora"].value("rank", 8);
    lc.alpha = j["lora"].value("alpha", 16.0);
    lc.target_query = j["lora"].value("target_query", true);
    lc.target_value = j["lora"].value("target_value", true);
    m.apply_lora(lc);
  }
  if (tensors.size() != m.params_.size())
    raise(errc::corrupt_file, "checkpoint tensor count " + std::to_string(tensors.size()) +
                                  ", expected " + std::to_string(m.params_.size()));
  for (const auto& [name, value] : tensors) {
    Parameter* p = m.param(name);
    if (!p) raise(errc::corrupt_file, "unknown tensor " + name);
    if (!p->value.same_shape(value)) raise(errc::corrupt_file, "shape mismatch for " + name);
    p->value = value;
  }
  return m;
}

// ---------------------------------------------------------------------------
// ModelGraph

ModelGraph::ModelGraph(Tape& tape, const TimerModel& model, bool for_training, Rng* dropout_rng)
    : tape_(tape), model_(model), training_(for_training), dropout_rng_(dropout_rng) {
  bound_.reserve(model_.params_.size());
  for (const auto& p : model_.params_)
    bound_.emplace_back(p.get(), tape_.leaf(p->value, for_training && p->trainable));
}

Var ModelGraph::var_of(const Parameter* p) const {
  for (const auto& [ptr, var] : bound_)
    if (ptr == p) return var;
  raise(errc::disconnected_graph, "parameter not bound: " + p->name);
}

namespace {
const Parameter* need(const TimerModel& m, const std::string& name) {
  const Parameter* p = m.param(name);
  if (!p) raise(errc::disconnected_graph, "missing parameter " + name);
  return p;
}
}  // namespace

Var ModelGraph::linear(Var x, const std::string& w, const std::string& b) {
  return tape_.add_row_broadcast(tape_.matmul(x, var_of(need(model_, w))),
                                 var_of(need(model_, b)));
}

Var ModelGraph::lora_linear(Var x, const std::string& w, const std::string& b) {
  Var wv = var_of(need(model_, w));
  const Parameter* a = model_.param(w + ".lora_a");
  const Parameter* bb = model_.param(w + ".lora_b");
  if (a && bb) {
    const double scaling = model_.lora_config().alpha / static_cast<double>(a->value.dim(0));
    // W' = W + (alpha/r) (B A)^T, stored in x-times-W layout.
    Var delta = tape_.matmul(tape_.transpose(var_of(a)), tape_.transpose(var_of(bb)));
    wv = tape_.add(wv, tape_.scale(delta, scaling));
  }
  return tape_.add_row_broadcast(tape_.matmul(x, wv), var_of(need(model_, b)));
}

Var ModelGraph::dropout(Var x) {
  if (!training_ || model_.cfg_.dropout_p <= 0.0 || dropout_rng_ == nullptr) return x;
  const double p = model_.cfg_.dropout_p;
  Tensor mask(tape_.value(x).shape());
  for (int64_t i = 0; i < mask.size(); ++i)
    mask[i] = dropout_rng_->uniform() < p ? 0.0 : 1.0 / (1.0 - p);
  return tape_.mul(x, tape_.constant(std::move(mask)));
}

Var ModelGraph::block(Var h, int l) {
  const std::string p = "block" + std::to_string(l);
  const auto& cfg = model_.cfg_;
  const int64_t dh = cfg.d_model / cfg.n_heads;

  Var a = tape_.layer_norm_rows(h, var_of(need(model_, p + ".ln1.g")),
                                var_of(need(model_, p + ".ln1.b")));
  Var q = lora_linear(a, p + ".attn.wq", p + ".attn.bq");
  Var k = linear(a, p + ".attn.wk", p + ".attn.bk");
  Var v = lora_linear(a, p + ".attn.wv", p + ".attn.bv");

  std::vector<Var> heads;
  heads.reserve(static_cast<size_t>(cfg.n_heads));
  for (int hd = 0; hd < cfg.n_heads; ++hd) {
    const int64_t c0 = hd * dh, c1 = (hd + 1) * dh;
    Var qh = tape_.slice_cols(q, c0, c1);
    Var kh = tape_.slice_cols(k, c0, c1);
    Var vh = tape_.slice_cols(v, c0, c1);
    Var scores = tape_.scale(tape_.matmul(qh, tape_.transpose(kh)),
                             1.0 / std::sqrt(static_cast<double>(dh)));
    Var attn = tape_.softmax_rows(tape_.causal_mask_fill(scores));
    heads.push_back(tape_.matmul(attn, vh));
  }
  Var ctx = tape_.concat_cols(heads);
  Var o = dropout(linear(ctx, p + ".attn.wo", p + ".attn.bo"));
  h = tape_.add(h, o);

  Var a2 = tape_.layer_norm_rows(h, var_of(need(model_, p + ".ln2.g")),
                                 var_of(need(model_, p + ".ln2.b")));
  Var f = tape_.gelu(linear(a2, p + ".ffn.w1", p + ".ffn.b1"));
  Var f2 = dropout(linear(f, p + ".ffn.w2", p + ".ffn.b2"));
  return tape_.add(h, f2);
}

Var ModelGraph::decode_embeddings(Var h0) {
  const Tensor& t0 = tape_.value(h0);
  if (t0.rank() != 2 || t0.dim(1) != model_.cfg_.d_model)
    raise(errc::shape_mismatch, "decode_embeddings expects [N,D], got " + t0.shape_str());
  if (t0.dim(0) > model_.cfg_.max_tokens)
    raise(errc::too_many_tokens, std::to_string(t0.dim(0)) + " positions > max_tokens " +
                                     std::to_string(model_.cfg_.max_tokens));
  Var h = h0;
  for (int l = 0; l < model_.cfg_.n_blocks; ++l) h = block(h, l);
  return tape_.layer_norm_rows(h, var_of(need(model_, "final_norm.g")),
                               var_of(need(model_, "final_norm.b")));
}

Var ModelGraph::decode_tokens(const Tensor& tokens) {
  if (tokens.rank() != 2 || tokens.dim(1) != model_.cfg_.token_len)
    raise(errc::shape_mismatch, "decode_tokens expects [N,S], got " + tokens.shape_str());
  const int64_t n = tokens.dim(0);
  if (n < 1) raise(errc::empty_input, "decode_tokens: no tokens");
  if (n > model_.cfg_.max_tokens)
    raise(errc::too_many_tokens,
          std::to_string(n) + " tokens > max_tokens " + std::to_string(model_.cfg_.max_tokens));

  Var x = tape_.constant(tokens);
  Var h0 = tape_.add_row_broadcast(tape_.matmul(x, var_of(need(model_, "embed.w"))),
                                   var_of(need(model_, "embed.b")));
  Tensor te_rows({n, static_cast<int64_t>(model_.cfg_.d_model)});
  std::copy(model_.te_.data(), model_.te_.data() + te_rows.size(), te_rows.data());
  h0 = tape_.add(h0, tape_.constant(std::move(te_rows)));
  Var hl = decode_embeddings(h0);
  return tape_.add_row_broadcast(tape_.matmul(hl, var_of(need(model_, "head.w"))),
                                 var_of(need(model_, "head.b")));
}

Var ModelGraph::forecasting_loss(const TokenizedSeries& ts) {
  const int64_t n = ts.tokens.dim(0);
  const int64_t s = ts.tokens.dim(1);
  if (n < 2) raise(errc::single_token, "forecasting loss needs at least 2 tokens");
  Var preds = decode_tokens(ts.tokens);
  Var preds_head = tape_.slice_rows(preds, 0, n - 1);
  Tensor targets({n - 1, s});
  std::copy(ts.tokens.data() + s, ts.tokens.data() + n * s, targets.data());
  Var diff = tape_.sub(preds_head, tape_.constant(std::move(targets)));
  Var sq = tape_.mul(diff, diff);
  return tape_.scale(tape_.sum_all(sq), 1.0 / static_cast<double>(n * s));
}

Var ModelGraph::forecasting_loss_series(std::span<const double> y) {
  return forecasting_loss(tokenize(y, model_.cfg_.token_len));
}

Var ModelGraph::physics_embedding(const Tensor& segment, double sigma, Rng* noise_rng) {
  if (segment.rank() != 2 || segment.dim(1) != model_.cfg_.n_features)
    raise(errc::shape_mismatch, "physics segment must be [L," +
                                    std::to_string(model_.cfg_.n_features) + "], got " +
                                    segment.shape_str());
  if (!segment.all_finite()) raise(errc::non_finite_value, "physics segment contains NaN/Inf");
  const int64_t l = segment.dim(0);
  Var seg = tape_.constant(segment);
  Var hidden = tape_.gelu(linear(seg, "phi.w1", "phi.b1"));
  Var z = linear(hidden, "phi.w2", "phi.b2");
  if (sigma > 0.0 && noise_rng != nullptr) {
    Tensor noise(tape_.value(z).shape());
    for (int64_t i = 0; i < noise.size(); ++i) noise[i] = sigma * noise_rng->normal();
    z = tape_.add(z, tape_.constant(std::move(noise)));
  }
  if (l > model_.cfg_.max_tokens)
    raise(errc::too_many_tokens, "physics segment length " + std::to_string(l) +
                                     " > max_tokens " + std::to_string(model_.cfg_.max_tokens));
  Tensor te_rows({l, static_cast<int64_t>(model_.cfg_.d_model)});
  std::copy(model_.te_.data(), model_.te_.data() + te_rows.size(), te_rows.data());
  Var h0 = tape_.add(z, tape_.constant(std::move(te_rows)));
  return tape_.mean_rows(decode_embeddings(h0));
}

Var ModelGraph::contrastive_loss(const Triplet& t, double tau, double sigma, Rng* noise_rng) {
  if (!(tau > 0.0)) raise(errc::non_positive_tau, "contrastive loss temperature");
  Var za = physics_embedding(t.anchor, sigma, noise_rng);
  Var zp = physics_embedding(t.positive, sigma, noise_rng);
  Var zn = physics_embedding(t.negative, sigma, noise_rng);
  Var s_ap = tape_.cosine_similarity(za, zp);
  Var s_an = tape_.cosine_similarity(za, zn);
  // -log( exp(s_ap/tau) / (exp(s_ap/tau) + exp(s_an/tau)) )
  return tape_.softplus(tape_.scale(tape_.sub(s_an, s_ap), 1.0 / tau));
}

// ---------------------------------------------------------------------------
// Forecaster adapters

Forecaster make_forecaster(const TimerModel& model) {
  const TimerModel* m = &model;
  return [m](std::span<const double> lookback, int horizon) {
    return m->autoregressive_forecast(lookback, horizon);
  };
}

Forecaster persistence_forecaster() {
  return [](std::span<const double> lookback, int horizon) {
    if (lookback.empty()) raise(errc::empty_history, "persistence forecaster");
    return std::vector<double>(static_cast<size_t>(horizon), lookback.back());
  };
}

Forecaster drift_forecaster(int tail) {
  return [tail](std::span<const double> lookback, int horizon) {
    if (lookback.empty()) raise(errc::empty_history, "drift forecaster");
    const auto n = static_cast<int64_t>(std::min<size_t>(lookback.size(),
                                                         static_cast<size_t>(std::max(tail, 2))));
    const std::span<const double> w(lookback.data() + lookback.size() - static_cast<size_t>(n),
                                    static_cast<size_t>(n));
    double slope = 0.0;
    if (n >= 2) {
      double su = 0.0, sy = 0.0, suu = 0.0, suy = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const auto u = static_cast<double>(i);
        su += u;
        sy += w[static_cast<size_t>(i)];
        suu += u * u;
        suy += u * w[static_cast<size_t>(i)];
      }
      const double den = static_cast<double>(n) * suu - su * su;
      if (den != 0.0) slope = (static_cast<double>(n) * suy - su * sy) / den;
    }
    std::vector<double> out(static_cast<size_t>(horizon));
    for (int j = 0; j < horizon; ++j)
      out[static_cast<size_t>(j)] = lookback.back() + slope * static_cast<double>(j + 1);
    return out;
  };
}

}  // namespace tsfm
