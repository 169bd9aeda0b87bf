#include "urbangen/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "urbangen/errors.hpp"
#include "urbangen/rng.hpp"

namespace urbangen::model {

namespace bg = blockgraph;

namespace {

// Softmax cross-entropy over k logits; writes scale * (p - onehot) to grad
// when given.
double softmax_ce(const double* logits, int k, int target, double* grad, double scale) {
  const double m = *std::max_element(logits, logits + k);
  double z = 0.0;
  for (int j = 0; j < k; ++j) z += std::exp(logits[j] - m);
  const double lse = m + std::log(z);
  if (grad != nullptr) {
    for (int j = 0; j < k; ++j) grad[j] = scale * (std::exp(logits[j] - lse) - (j == target ? 1.0 : 0.0));
  }
  return lse - logits[target];
}

int argmax(const double* v, int k) { return static_cast<int>(std::max_element(v, v + k) - v); }

}  // namespace

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  total += o.total;
  exist += o.exist;
  pos += o.pos;
  size += o.size;
  height += o.height;
  shape += o.shape;
  iou += o.iou;
  edge += o.edge;
  kl += o.kl;
  occupied += o.occupied;
  occupied_edges += o.occupied_edges;
  return *this;
}

Neighborhoods make_neighborhoods(int n, const std::vector<bg::GridEdge>& edges, const std::vector<bool>& active,
                                 bool unit_weights) {
  Neighborhoods nb;
  nb.nodes.resize(static_cast<std::size_t>(n));
  nb.weights.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nb.nodes[static_cast<std::size_t>(i)].push_back(i);
    nb.weights[static_cast<std::size_t>(i)].push_back(1.0);
  }
  for (const bg::GridEdge& e : edges) {
    if (!active[static_cast<std::size_t>(e.from)] || !active[static_cast<std::size_t>(e.to)]) continue;
    const double w = unit_weights ? 1.0 : e.weight;
    nb.nodes[static_cast<std::size_t>(e.from)].push_back(e.to);
    nb.weights[static_cast<std::size_t>(e.from)].push_back(w);
    nb.nodes[static_cast<std::size_t>(e.to)].push_back(e.from);
    nb.weights[static_cast<std::size_t>(e.to)].push_back(w);
  }
  return nb;
}

Neighborhoods encoder_neighborhoods(const bg::LayoutGraph& g) {
  std::vector<bool> active(g.nodes.size());
  for (std::size_t i = 0; i < g.nodes.size(); ++i) active[i] = g.nodes[i].e > 0.5;
  return make_neighborhoods(static_cast<int>(g.nodes.size()), g.edges, active, false);
}

Neighborhoods decoder_neighborhoods(bg::GridDims dims) {
  return make_neighborhoods(dims.slots(), bg::grid_edges(dims), std::vector<bool>(static_cast<std::size_t>(dims.slots()), true),
                            true);
}

Matrix gat_forward(const Matrix& h, const Neighborhoods& nb, const GatWeights& p, GatCache* cache) {
  const int n = static_cast<int>(h.rows());
  const int k_heads = p.heads;
  const int dh = static_cast<int>(p.w.cols()) / k_heads;
  Matrix hp = h * p.w;
  Matrix s(n, k_heads), t(n, k_heads);
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < k_heads; ++k) {
      s(i, k) = hp.row(i).segment(k * dh, dh).dot(p.a_src.row(k));
      t(i, k) = hp.row(i).segment(k * dh, dh).dot(p.a_dst.row(k));
    }
  }
  Matrix pre = Matrix::Zero(n, hp.cols());
  std::vector<std::vector<double>> raw(static_cast<std::size_t>(n)), alpha(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = nb.nodes[static_cast<std::size_t>(i)];
    const auto& wts = nb.weights[static_cast<std::size_t>(i)];
    const std::size_t deg = nbrs.size();
    auto& r = raw[static_cast<std::size_t>(i)];
    auto& a = alpha[static_cast<std::size_t>(i)];
    r.resize(deg * static_cast<std::size_t>(k_heads));
    a.resize(r.size());
    for (int k = 0; k < k_heads; ++k) {
      double* rk = r.data() + static_cast<std::size_t>(k) * deg;
      double* ak = a.data() + static_cast<std::size_t>(k) * deg;
      double m = -INFINITY;
      for (std::size_t q = 0; q < deg; ++q) {
        rk[q] = s(i, k) + t(nbrs[q], k);
        ak[q] = wts[q] * nn::leaky_relu(rk[q], p.slope);
        m = std::max(m, ak[q]);
      }
      double z = 0.0;
      for (std::size_t q = 0; q < deg; ++q) z += (ak[q] = std::exp(ak[q] - m));
      for (std::size_t q = 0; q < deg; ++q) {
        ak[q] /= z;
        pre.row(i).segment(k * dh, dh) += ak[q] * hp.row(nbrs[q]).segment(k * dh, dh);
      }
    }
  }
  Matrix out = pre.unaryExpr([](double x) { return nn::elu(x); });
  if (cache != nullptr) {
    cache->input = h;
    cache->projected = std::move(hp);
    cache->pre = std::move(pre);
    cache->raw = std::move(raw);
    cache->alpha = std::move(alpha);
  }
  return out;
}

Matrix gat_backward(const Matrix& d_out, const Neighborhoods& nb, const GatWeights& p, const GatCache& c,
                    Matrix& d_w, Matrix& d_a_src, Matrix& d_a_dst) {
  const int n = static_cast<int>(d_out.rows());
  const int k_heads = p.heads;
  const int dh = static_cast<int>(p.w.cols()) / k_heads;
  const Matrix dpre = d_out.cwiseProduct(c.pre.unaryExpr([](double x) { return nn::elu_grad(x); }));
  Matrix dhp = Matrix::Zero(n, c.projected.cols());
  Matrix ds = Matrix::Zero(n, k_heads), dt = Matrix::Zero(n, k_heads);
  std::vector<double> dalpha;
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = nb.nodes[static_cast<std::size_t>(i)];
    const auto& wts = nb.weights[static_cast<std::size_t>(i)];
    const std::size_t deg = nbrs.size();
    dalpha.resize(deg);
    for (int k = 0; k < k_heads; ++k) {
      const double* rk = c.raw[static_cast<std::size_t>(i)].data() + static_cast<std::size_t>(k) * deg;
      const double* ak = c.alpha[static_cast<std::size_t>(i)].data() + static_cast<std::size_t>(k) * deg;
      const auto g = dpre.row(i).segment(k * dh, dh);
      double dot = 0.0;
      for (std::size_t q = 0; q < deg; ++q) {
        dalpha[q] = g.dot(c.projected.row(nbrs[q]).segment(k * dh, dh));
        dhp.row(nbrs[q]).segment(k * dh, dh) += ak[q] * g;
        dot += ak[q] * dalpha[q];
      }
      for (std::size_t q = 0; q < deg; ++q) {
        const double draw = ak[q] * (dalpha[q] - dot) * wts[q] * nn::leaky_relu_grad(rk[q], p.slope);
        ds(i, k) += draw;
        dt(nbrs[q], k) += draw;
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < k_heads; ++k) {
      d_a_src.row(k) += ds(i, k) * c.projected.row(i).segment(k * dh, dh);
      d_a_dst.row(k) += dt(i, k) * c.projected.row(i).segment(k * dh, dh);
      dhp.row(i).segment(k * dh, dh) += ds(i, k) * p.a_src.row(k) + dt(i, k) * p.a_dst.row(k);
    }
  }
  d_w.noalias() += c.input.transpose() * dhp;
  return dhp * p.w.transpose();
}

Vector reparameterize(const Vector& mu, const Vector& logvar, const Vector& eps) {
  return mu + ((0.5 * logvar.array()).exp() * eps.array()).matrix();
}

double kl_divergence(const Vector& mu, const Vector& logvar) {
  return 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).sum();
}

int height_bin(double h, int bins) { return std::clamp(static_cast<int>(std::floor(h * bins)), 0, bins - 1); }
int edge_bin(double w, int bins) { return std::clamp(static_cast<int>(std::floor(w * bins)), 0, bins - 1); }

Matrix node_features(const bg::LayoutGraph& g) {
  Matrix x = Matrix::Zero(static_cast<Eigen::Index>(g.nodes.size()), kNodeFeatures);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    const bg::BuildingNode& v = g.nodes[i];
    const auto r = static_cast<Eigen::Index>(i);
    if (v.e <= 0.5) continue;
    x(r, 0) = 1.0;
    x(r, 1) = v.x;
    x(r, 2) = v.y;
    x(r, 3) = v.l;
    x(r, 4) = v.w;
    x(r, 5) = v.h;
    x(r, 6 + static_cast<int>(v.s)) = 1.0;
    x(r, 14) = v.a;
  }
  return x;
}

struct CVAE::EncoderTrace {
  Matrix x;
  Matrix yrow;
  Neighborhoods nb;
  std::vector<GatCache> gat;
  std::vector<int> occupied;
  Matrix pool;
};

struct CVAE::DecoderTrace {
  Matrix zrow;
  Matrix yrow;
  std::vector<GatCache> gat;
  Matrix h;
};

CVAE::CVAE(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.hidden <= 0 || cfg.heads <= 0 || cfg.hidden % cfg.heads != 0 || cfg.latent <= 0 || cfg.layers <= 0 ||
      cfg.cond_dim <= 0 || cfg.height_bins <= 0 || cfg.edge_bins <= 0 || cfg.dims.slots() <= 0) {
    throw InvalidParams("invalid model configuration");
  }
  const int n = cfg.dims.slots();
  const int hd = cfg.hidden;
  const int dh = hd / cfg.heads;
  auto add_gat = [&](const std::string& prefix, std::vector<int>& into) {
    for (int l = 0; l < cfg.layers; ++l) {
      const std::string base = prefix + std::to_string(l);
      into.push_back(params_.add(base + ".w", hd, hd));
      params_.add(base + ".a_src", cfg.heads, dh);
      params_.add(base + ".a_dst", cfg.heads, dh);
    }
  };
  enc_node_w_ = params_.add("enc.in.node_w", kNodeFeatures, hd);
  enc_cond_w_ = params_.add("enc.in.cond_w", cfg.cond_dim, hd);
  enc_b_ = params_.add("enc.in.b", 1, hd);
  enc_pos_ = params_.add("enc.pos", n, hd);
  add_gat("enc.gat", enc_gat_);
  mu_w_ = params_.add("enc.mu.w", hd, cfg.latent);
  mu_b_ = params_.add("enc.mu.b", 1, cfg.latent);
  lv_w_ = params_.add("enc.logvar.w", hd, cfg.latent);
  lv_b_ = params_.add("enc.logvar.b", 1, cfg.latent);
  dec_pos_ = params_.add("dec.pos", n, hd);
  dec_z_w_ = params_.add("dec.in.z_w", cfg.latent, hd);
  dec_y_w_ = params_.add("dec.in.cond_w", cfg.cond_dim, hd);
  dec_b_ = params_.add("dec.in.b", 1, hd);
  add_gat("dec.gat", dec_gat_);
  out_w_ = params_.add("dec.out.w", hd, slot_outputs());
  out_b_ = params_.add("dec.out.b", 1, slot_outputs());
  edge_src_ = params_.add("dec.edge.src", hd, cfg.edge_bins);
  edge_dst_ = params_.add("dec.edge.dst", hd, cfg.edge_bins);
  edge_b_ = params_.add("dec.edge.b", 1, cfg.edge_bins);

  for (int i = 0; i < params_.size(); ++i) {
    Matrix& m = params_.value(i);
    const std::string& name = params_.name(i);
    const std::uint64_t key = hash_combine(seed, static_cast<std::uint64_t>(i));
    if (name.ends_with(".b")) continue;
    if (name.ends_with(".pos")) {
      CounterRng rng(key);
      for (Eigen::Index j = 0; j < m.size(); ++j) m.data()[j] = 0.1 * rng.normal();
    } else if (name.ends_with(".a_src") || name.ends_with(".a_dst")) {
      nn::glorot_init(m, dh, 1, key);
    } else {
      nn::glorot_init(m, static_cast<int>(m.rows()), static_cast<int>(m.cols()), key);
    }
  }
  params_.value(lv_w_) *= 0.1;
  dec_nb_ = decoder_neighborhoods(cfg.dims);
  edges_ = bg::grid_edges(cfg.dims);
}

GatWeights CVAE::gat(int first) const {
  return {params_.value(first), params_.value(first + 1), params_.value(first + 2), cfg_.heads, cfg_.slope};
}

Encoded CVAE::encode(const bg::LayoutGraph& g, const Vector& y) const { return encode_impl(g, y, nullptr); }
Decoded CVAE::decode(const Vector& z, const Vector& y) const { return decode_impl(z, y, nullptr); }

Encoded CVAE::encode_impl(const bg::LayoutGraph& g, const Vector& y, EncoderTrace* t) const {
  const int n = cfg_.dims.slots();
  if (static_cast<int>(g.nodes.size()) != n || g.dims != cfg_.dims) throw InvalidParams("graph does not match model grid");
  if (y.size() != cfg_.cond_dim) throw InvalidParams("condition vector has the wrong dimension");
  Matrix x = node_features(g);
  Matrix yrow = y.transpose();
  Matrix h = x * params_.value(enc_node_w_) + params_.value(enc_pos_);
  const Matrix shared = yrow * params_.value(enc_cond_w_) + params_.value(enc_b_);
  h.rowwise() += shared.row(0);
  Neighborhoods nb = encoder_neighborhoods(g);
  // Attention layers are residual; without the skip, saturated attention can
  // copy one node into all its neighbours and slot identity is lost.
  std::vector<GatCache> caches(static_cast<std::size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    h += gat_forward(h, nb, gat(enc_gat_[static_cast<std::size_t>(l)]), t ? &caches[static_cast<std::size_t>(l)] : nullptr);
  }
  std::vector<int> occ;
  for (int i = 0; i < n; ++i) {
    if (g.nodes[static_cast<std::size_t>(i)].e > 0.5) occ.push_back(i);
  }
  Matrix pool = Matrix::Zero(1, cfg_.hidden);
  if (occ.empty()) {
    // Nothing to pool; fall back to the slot embeddings.
    pool = params_.value(enc_pos_).colwise().mean();
  } else {
    for (int i : occ) pool += h.row(i);
    pool /= static_cast<double>(occ.size());
  }
  Encoded e;
  e.mu = (pool * params_.value(mu_w_) + params_.value(mu_b_)).transpose();
  e.logvar = (pool * params_.value(lv_w_) + params_.value(lv_b_)).transpose();
  if (t != nullptr) {
    t->x = std::move(x);
    t->yrow = std::move(yrow);
    t->nb = std::move(nb);
    t->gat = std::move(caches);
    t->occupied = std::move(occ);
    t->pool = std::move(pool);
  }
  return e;
}

Decoded CVAE::decode_impl(const Vector& z, const Vector& y, DecoderTrace* t) const {
  if (z.size() != cfg_.latent) throw InvalidParams("latent vector has the wrong dimension");
  if (y.size() != cfg_.cond_dim) throw InvalidParams("condition vector has the wrong dimension");
  Matrix zrow = z.transpose();
  Matrix yrow = y.transpose();
  const Matrix base = zrow * params_.value(dec_z_w_) + yrow * params_.value(dec_y_w_) + params_.value(dec_b_);
  Matrix h = params_.value(dec_pos_);
  h.rowwise() += base.row(0);
  std::vector<GatCache> caches(static_cast<std::size_t>(cfg_.layers));
  for (int l = 0; l < cfg_.layers; ++l) {
    h += gat_forward(h, dec_nb_, gat(dec_gat_[static_cast<std::size_t>(l)]),
                    t ? &caches[static_cast<std::size_t>(l)] : nullptr);
  }
  Decoded d;
  d.slots = h * params_.value(out_w_);
  d.slots.rowwise() += params_.value(out_b_).row(0);
  const Matrix ha = h * params_.value(edge_src_);
  const Matrix hb = h * params_.value(edge_dst_);
  d.edge_logits.resize(static_cast<Eigen::Index>(edges_.size()), cfg_.edge_bins);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    d.edge_logits.row(static_cast<Eigen::Index>(e)) =
        ha.row(edges_[e].from) + hb.row(edges_[e].to) + params_.value(edge_b_).row(0);
  }
  if (t != nullptr) {
    t->zrow = std::move(zrow);
    t->yrow = std::move(yrow);
    t->gat = std::move(caches);
    t->h = std::move(h);
  }
  return d;
}

namespace {

LossBreakdown loss_terms(const ModelConfig& cfg, const Decoded& pred, const bg::LayoutGraph& target,
                         const std::vector<bg::GridEdge>& edges, const Vector& mu, const Vector& logvar,
                         const TrainConfig& tc, Matrix* d_slots, Matrix* d_edges) {
  const int n = cfg.dims.slots();
  if (static_cast<int>(target.nodes.size()) != n || target.edges.size() != edges.size()) {
    throw InvalidParams("graph does not match model grid");
  }
  const int hb = cfg.height_bins;
  const int hc = pred.height_col();
  const int sc = pred.shape_col(hb);
  const int ic = pred.iou_col(hb);
  if (d_slots != nullptr) *d_slots = Matrix::Zero(pred.slots.rows(), pred.slots.cols());
  if (d_edges != nullptr) *d_edges = Matrix::Zero(pred.edge_logits.rows(), pred.edge_logits.cols());
  LossBreakdown lb;
  auto squared = [&](int i, int col, double goal, double lambda, double& term) {
    const double p = nn::sigmoid(pred.slots(i, col));
    const double diff = p - goal;
    term += diff * diff;
    if (d_slots != nullptr) (*d_slots)(i, col) = lambda * 2.0 * diff * p * (1.0 - p);
  };
  for (int i = 0; i < n; ++i) {
    const bg::BuildingNode& v = target.nodes[static_cast<std::size_t>(i)];
    const double e = v.e > 0.5 ? 1.0 : 0.0;
    const double xl = pred.slots(i, 0);
    lb.exist += nn::softplus(xl) - e * xl;
    if (d_slots != nullptr) (*d_slots)(i, 0) = tc.lambda_exist * (nn::sigmoid(xl) - e);
    if (e == 0.0) continue;
    ++lb.occupied;
    squared(i, pred.pos_col(), v.x, tc.lambda_pos, lb.pos);
    squared(i, pred.pos_col() + 1, v.y, tc.lambda_pos, lb.pos);
    squared(i, pred.size_col(), v.l, tc.lambda_size, lb.size);
    squared(i, pred.size_col() + 1, v.w, tc.lambda_size, lb.size);
    squared(i, ic, v.a, tc.lambda_iou, lb.iou);
    lb.height += softmax_ce(&pred.slots(i, hc), hb, height_bin(v.h, hb), d_slots ? &(*d_slots)(i, hc) : nullptr,
                            tc.lambda_height);
    lb.shape += softmax_ce(&pred.slots(i, sc), shapelib::kNumClasses, static_cast<int>(v.s),
                           d_slots ? &(*d_slots)(i, sc) : nullptr, tc.lambda_shape);
  }
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const bg::GridEdge& ge = edges[k];
    if (target.nodes[static_cast<std::size_t>(ge.from)].e <= 0.5 || target.nodes[static_cast<std::size_t>(ge.to)].e <= 0.5) {
      continue;
    }
    ++lb.occupied_edges;
    const auto r = static_cast<Eigen::Index>(k);
    lb.edge += softmax_ce(&pred.edge_logits(r, 0), cfg.edge_bins, edge_bin(target.edges[k].weight, cfg.edge_bins),
                          d_edges ? &(*d_edges)(r, 0) : nullptr, tc.lambda_edge);
  }
  lb.kl = kl_divergence(mu, logvar);
  lb.total = tc.lambda_exist * lb.exist + tc.lambda_pos * lb.pos + tc.lambda_size * lb.size +
             tc.lambda_height * lb.height + tc.lambda_shape * lb.shape + tc.lambda_iou * lb.iou +
             tc.lambda_edge * lb.edge + tc.beta_kl * lb.kl;
  return lb;
}

}  // namespace

LossBreakdown CVAE::elbo_loss(const Decoded& pred, const bg::LayoutGraph& target, const Vector& mu,
                              const Vector& logvar, const TrainConfig& tc) const {
  return loss_terms(cfg_, pred, target, edges_, mu, logvar, tc, nullptr, nullptr);
}

LossBreakdown CVAE::forward_backward(const Sample& s, const Vector& eps, const TrainConfig& tc, bool backward) {
  if (eps.size() != cfg_.latent) throw InvalidParams("noise vector has the wrong dimension");
  EncoderTrace et;
  DecoderTrace dt;
  const Encoded enc = encode_impl(s.graph, s.y, backward ? &et : nullptr);
  const Vector z = reparameterize(enc.mu, enc.logvar, eps);
  const Decoded dec = decode_impl(z, s.y, backward ? &dt : nullptr);
  Matrix d_slots, d_edges;
  const LossBreakdown lb = loss_terms(cfg_, dec, s.graph, edges_, enc.mu, enc.logvar, tc,
                                      backward ? &d_slots : nullptr, backward ? &d_edges : nullptr);
  if (!backward) return lb;

  nn::ParamSet& p = params_;
  const int n = cfg_.dims.slots();

  // Output heads.
  p.grad(out_w_).noalias() += dt.h.transpose() * d_slots;
  p.grad(out_b_) += d_slots.colwise().sum();
  Matrix dh = d_slots * p.value(out_w_).transpose();
  Matrix dha = Matrix::Zero(n, cfg_.edge_bins), dhb = Matrix::Zero(n, cfg_.edge_bins);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    dha.row(edges_[e].from) += d_edges.row(static_cast<Eigen::Index>(e));
    dhb.row(edges_[e].to) += d_edges.row(static_cast<Eigen::Index>(e));
  }
  p.grad(edge_b_) += d_edges.colwise().sum();
  p.grad(edge_src_).noalias() += dt.h.transpose() * dha;
  p.grad(edge_dst_).noalias() += dt.h.transpose() * dhb;
  dh.noalias() += dha * p.value(edge_src_).transpose();
  dh.noalias() += dhb * p.value(edge_dst_).transpose();

  // Decoder.
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const int w = dec_gat_[static_cast<std::size_t>(l)];
    dh += gat_backward(dh, dec_nb_, gat(w), dt.gat[static_cast<std::size_t>(l)], p.grad(w), p.grad(w + 1), p.grad(w + 2));
  }
  p.grad(dec_pos_) += dh;
  const Matrix dbase = dh.colwise().sum();
  p.grad(dec_b_) += dbase;
  p.grad(dec_z_w_).noalias() += dt.zrow.transpose() * dbase;
  p.grad(dec_y_w_).noalias() += dt.yrow.transpose() * dbase;
  const Vector dz = (dbase * p.value(dec_z_w_).transpose()).transpose();

  // Reparameterization and KL.
  const Vector sd = (0.5 * enc.logvar.array()).exp().matrix();
  const Vector dmu = dz + tc.beta_kl * enc.mu;
  const Vector dlv = (0.5 * dz.array() * eps.array() * sd.array() +
                      tc.beta_kl * 0.5 * (enc.logvar.array().exp() - 1.0))
                         .matrix();
  const Matrix dmu_row = dmu.transpose();
  const Matrix dlv_row = dlv.transpose();
  p.grad(mu_w_).noalias() += et.pool.transpose() * dmu_row;
  p.grad(mu_b_) += dmu_row;
  p.grad(lv_w_).noalias() += et.pool.transpose() * dlv_row;
  p.grad(lv_b_) += dlv_row;
  const Matrix dpool = dmu_row * p.value(mu_w_).transpose() + dlv_row * p.value(lv_w_).transpose();

  // Encoder.
  if (et.occupied.empty()) {
    p.grad(enc_pos_).rowwise() += dpool.row(0) / static_cast<double>(n);
    return lb;
  }
  Matrix dhe = Matrix::Zero(n, cfg_.hidden);
  for (int i : et.occupied) dhe.row(i) = dpool.row(0) / static_cast<double>(et.occupied.size());
  for (int l = cfg_.layers - 1; l >= 0; --l) {
    const int w = enc_gat_[static_cast<std::size_t>(l)];
    dhe += gat_backward(dhe, et.nb, gat(w), et.gat[static_cast<std::size_t>(l)], p.grad(w), p.grad(w + 1), p.grad(w + 2));
  }
  p.grad(enc_pos_) += dhe;
  p.grad(enc_node_w_).noalias() += et.x.transpose() * dhe;
  const Matrix dshared = dhe.colwise().sum();
  p.grad(enc_b_) += dshared;
  p.grad(enc_cond_w_).noalias() += et.yrow.transpose() * dshared;
  return lb;
}

std::vector<bg::BuildingNode> CVAE::predicted_nodes(const Decoded& d) const {
  const int hb = cfg_.height_bins;
  std::vector<bg::BuildingNode> out(static_cast<std::size_t>(d.slots.rows()));
  for (Eigen::Index i = 0; i < d.slots.rows(); ++i) {
    if (nn::sigmoid(d.slots(i, 0)) < 0.5) continue;
    bg::BuildingNode& v = out[static_cast<std::size_t>(i)];
    v.e = 1.0;
    v.x = nn::sigmoid(d.slots(i, d.pos_col()));
    v.y = nn::sigmoid(d.slots(i, d.pos_col() + 1));
    v.l = nn::sigmoid(d.slots(i, d.size_col()));
    v.w = nn::sigmoid(d.slots(i, d.size_col() + 1));
    v.h = (argmax(&d.slots(i, d.height_col()), hb) + 0.5) / hb;
    v.s = shapelib::class_from_index(argmax(&d.slots(i, d.shape_col(hb)), shapelib::kNumClasses));
    v.a = nn::sigmoid(d.slots(i, d.iou_col(hb)));
  }
  return out;
}

std::vector<double> CVAE::predicted_edge_weights(const Decoded& d) const {
  std::vector<double> w(static_cast<std::size_t>(d.edge_logits.rows()));
  for (Eigen::Index e = 0; e < d.edge_logits.rows(); ++e) {
    w[static_cast<std::size_t>(e)] = (argmax(&d.edge_logits(e, 0), cfg_.edge_bins) + 0.5) / cfg_.edge_bins;
  }
  return w;
}

Vector normal_vector(int dim, std::uint64_t key) {
  CounterRng rng(key);
  Vector v(dim);
  for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  return v;
}

std::uint64_t block_key(std::uint64_t seed, const std::string& block_id) {
  return hash_combine(seed, hash_string(block_id));
}

TrainResult train(CVAE& model, const std::vector<Sample>& data, const TrainConfig& tc, const EpochCallback& on_epoch) {
  if (data.empty()) throw EmptyDataset("no training samples");
  TrainResult res;
  nn::Adam adam(tc.learning_rate);
  std::vector<std::size_t> order(data.size());
  const std::size_t batch = static_cast<std::size_t>(std::max(1, tc.batch_size));
  const int latent = model.config().latent;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    const std::uint64_t epoch_key = hash_combine(tc.seed, static_cast<std::uint64_t>(epoch));
    CounterRng rng(epoch_key);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.next_u64() % i]);
    LossBreakdown acc;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      model.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const Vector eps = normal_vector(latent, hash_combine(epoch_key ^ 0xA5A5A5A5ULL, order[k]));
        acc += model.forward_backward(data[order[k]], eps, tc, true);
      }
      model.params().scale_grad(1.0 / static_cast<double>(end - start));
      adam.step(model.params());
    }
    res.epoch_loss.push_back(acc.total / static_cast<double>(data.size()));
    if (epoch + 1 == tc.epochs) res.last_epoch = acc;
    if (on_epoch) on_epoch(epoch, res.epoch_loss.back());
  }
  return res;
}

std::vector<bg::BuildingNode> reconstruct(const CVAE& model, const Sample& s) {
  const Encoded e = model.encode(s.graph, s.y);
  return model.predicted_nodes(model.decode(e.mu, s.y));
}

bg::GeneratedLayout sample_layout(const geometry::Polygon& block, int land_use, const CVAE& model,
                                  const condition::BlockAutoencoder& ae, std::uint64_t seed, const std::string& block_id,
                                  const bg::GraphConfig& gcfg, int num_classes) {
  const condition::ConditionVector c = condition::encode_condition(block, land_use, ae, num_classes);
  if (c.dim() != model.config().cond_dim) throw InvalidParams("land-use class count does not match the model");
  const Vector z = normal_vector(model.config().latent, block_key(seed, block_id));
  const auto nodes = model.predicted_nodes(model.decode(z, c.concat()));
  bg::GraphConfig cfg = gcfg;
  cfg.dims = model.config().dims;
  bg::GeneratedLayout out;
  out.block_id = block_id;
  out.land_use = land_use;
  out.buildings = bg::degraph(nodes, nullptr, geometry::canonical_frame(block), block, cfg);
  return out;
}

GradientCheck gradient_check(CVAE& model, const Sample& s, const Vector& eps, const TrainConfig& tc, double h,
                             double floor) {
  nn::ParamSet& p = model.params();
  p.zero_grad();
  model.forward_backward(s, eps, tc, true);
  GradientCheck res;
  for (int t = 0; t < p.size(); ++t) {
    const Matrix analytic = p.grad(t);
    Matrix& v = p.value(t);
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      const double orig = v.data()[i];
      v.data()[i] = orig + h;
      const double up = model.forward_backward(s, eps, tc, false).total;
      v.data()[i] = orig - h;
      const double down = model.forward_backward(s, eps, tc, false).total;
      v.data()[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic.data()[i];
      const double err = std::abs(a - numeric);
      res.max_abs_error = std::max(res.max_abs_error, err);
      res.max_relative_error = std::max(res.max_relative_error, err / std::max(std::abs(a) + std::abs(numeric), floor));
      ++res.checked;
    }
  }
  return res;
}

}  // namespace urbangen::model
