#include "ncdeon/model.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace ncdeon {

Affine glorot_affine(int in, int out, std::mt19937_64& g) {
  double lim = std::sqrt(6.0 / (in + out));
  std::uniform_real_distribution<double> u(-lim, lim);
  Affine a;
  a.W = Tensor({in, out});
  a.b = Tensor({out});
  for (long long i = 0; i < a.W.numel(); ++i) a.W[i] = u(g);
  return a;
}

Tensor orthogonal(int n, std::mt19937_64& g) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Eigen::MatrixXd m(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) m(i, j) = nd(g);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  Eigen::MatrixXd q = qr.householderQ();
  Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  Tensor t({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) t.at(i, j) = q(i, j);
  return t;
}

Tensor affine_apply(const Affine& a, const Tensor& x) {
  return ops::add_rowvec(ops::matmul(x, a.W), a.b);
}

Tensor trunk_features(const TrunkParams& tp, const Tensor& q) {
  if (q.rank() != 2 || q.dim(1) != tp.in_dim)
    throw value_error(strf("trunk_features: queries must be (Q,%d), got ",
                           tp.in_dim) + shape_str(q));
  Tensor h = q;
  int L = (int)tp.layers.size();
  for (int l = 0; l < L; ++l) {
    h = affine_apply(tp.layers[l], h);
    if (l + 1 < L) {
      h = ops::layer_norm(h, tp.ln_gain[l], tp.ln_bias[l], kLayerNormEps);
      h = ops::gelu(h);
    }
  }
  return h;
}

Tape::Var trunk_tape_features(Tape& tape, const TrunkParams& tp,
                              const TrunkTapeLeaves& lv, Tape::Var q) {
  int L = (int)tp.layers.size();
  Tape::Var h = q;
  for (int l = 0; l < L; ++l) {
    h = tape.linear(h, lv.layers[l][0], lv.layers[l][1]);
    if (l + 1 < L) {
      h = tape.layer_norm(h, lv.ln[l][0], lv.ln[l][1], kLayerNormEps);
      h = tape.gelu(h);
    }
  }
  return h;
}

TrunkParams make_trunk(int in_dim, int width, int depth, int embed,
                       std::mt19937_64& g) {
  if (depth < 2) throw value_error("make_trunk: depth must be >= 2");
  TrunkParams tp;
  tp.in_dim = in_dim;
  tp.width = width;
  tp.depth = depth;
  tp.embed = embed;
  for (int l = 0; l < depth; ++l) {
    int in = l == 0 ? in_dim : width;
    int out = l == depth - 1 ? embed : width;
    tp.layers.push_back(glorot_affine(in, out, g));
    if (l + 1 < depth) {
      tp.ln_gain.push_back(Tensor::full({out}, 1.0));
      tp.ln_bias.push_back(Tensor({out}));
    }
  }
  return tp;
}

OperatorModel make_model(const ModelSpec& ms, std::mt19937_64& g) {
  OperatorModel m;
  m.kind = ms.kind;
  m.trunk_mode = ms.trunk_mode;
  m.c = ms.c;
  m.embed = ms.embed;
  int trunk_in = ms.trunk_mode == TrunkMode::Spacetime ? 3 : 2;
  if (ms.kind == ModelKind::Ncde) {
    m.ncde = make_ncde(ms.latent, ms.d_in + 1, ms.width, ms.depth, g);
    m.head = glorot_affine(ms.latent, ms.c * ms.embed, g);
  } else {
    m.gru = make_gru(ms.d_in, ms.width, ms.depth, g);
    m.head = glorot_affine(ms.width, ms.c * ms.embed, g);
  }
  m.beta = Tensor({ms.c});
  m.trunk = make_trunk(trunk_in, ms.width, ms.depth, ms.embed, g);
  return m;
}

std::vector<NamedParam> named_params(OperatorModel& m) {
  std::vector<NamedParam> ps;
  auto aff = [&](const std::string& base, Affine& a) {
    ps.push_back({base + ".W", &a.W});
    ps.push_back({base + ".b", &a.b});
  };
  if (m.kind == ModelKind::Ncde) {
    aff("ncde.init", m.ncde.init);
    for (size_t l = 0; l < m.ncde.field.size(); ++l)
      aff(strf("ncde.field.%zu", l), m.ncde.field[l]);
  } else {
    for (size_t l = 0; l < m.gru.cells.size(); ++l) {
      auto& c = m.gru.cells[l];
      std::string b = strf("gru.%zu", l);
      aff(b + ".wr", c.wr);
      aff(b + ".wz", c.wz);
      aff(b + ".wn", c.wn);
      ps.push_back({b + ".ur", &c.ur});
      ps.push_back({b + ".uz", &c.uz});
      ps.push_back({b + ".un", &c.un});
    }
  }
  aff("head", m.head);
  ps.push_back({"beta", &m.beta});
  for (size_t l = 0; l < m.trunk.layers.size(); ++l)
    aff(strf("trunk.%zu", l), m.trunk.layers[l]);
  for (size_t l = 0; l < m.trunk.ln_gain.size(); ++l) {
    ps.push_back({strf("trunk.ln.%zu.g", l), &m.trunk.ln_gain[l]});
    ps.push_back({strf("trunk.ln.%zu.b", l), &m.trunk.ln_bias[l]});
  }
  return ps;
}

Tensor branch_embed(const OperatorModel& m, const ControlPath& path,
                    const SolverConfig& cfg) {
  Tensor feat;
  if (m.kind == ModelKind::Ncde) {
    auto r = ncde_forward(m.ncde, path, cfg);
    feat = r.zT;  // (d)
  } else {
    feat = gru_forward(m.gru, path.values);
  }
  Tensor row({1, (int)feat.numel()});
  std::memcpy(row.data(), feat.data(), feat.numel() * sizeof(double));
  return ops::matmul(row, m.head.W);  // (1, c*embed)
}

Tensor predict_spacetime(const OperatorModel& m, const Tensor& b,
                         const Tensor& queries) {
  if (m.trunk_mode != TrunkMode::Spacetime)
    throw value_error("predict_spacetime: model trunk is spatial-only");
  Tensor feats = trunk_features(m.trunk, queries);  // (Q, embed)
  Tensor out = ops::donet_head(b, feats, m.c, m.embed, feats.rows());
  return ops::add_rowvec(out, m.beta);
}

Tensor predict_spatial_only(const OperatorModel& m, const Tensor& z_states,
                            int j, const Tensor& xy_queries) {
  if (m.trunk_mode != TrunkMode::Spatial)
    throw value_error("predict_spatial_only: model trunk is spacetime");
  if (z_states.rank() != 2)
    throw value_error("predict_spatial_only: z_states must be (T,d)");
  if (j < 0 || j >= z_states.dim(0))
    throw value_error(strf(
        "predict_spatial_only: time index %d outside the training grid "
        "[0,%d); the spatial-only trunk cannot be queried off-grid",
        j, z_states.dim(0)));
  Tensor zrow({1, z_states.dim(1)});
  std::memcpy(zrow.data(), z_states.data() + (long long)j * z_states.dim(1),
              z_states.dim(1) * sizeof(double));
  Tensor b = ops::matmul(zrow, m.head.W);            // (1, c*embed)
  Tensor feats = trunk_features(m.trunk, xy_queries);  // (Q, embed)
  Tensor out = ops::donet_head(b, feats, m.c, m.embed, feats.rows());
  return ops::add_rowvec(out, m.beta);
}

}  // namespace ncdeon
