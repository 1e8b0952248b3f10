#include "ncdeon/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

namespace ncdeon {

double lr_at(long long step, long long total, const TrainConfig& tc) {
  if (total <= 0) return tc.lr_init;
  if (tc.warmup_frac < 0 || tc.warmup_frac >= 1)
    throw value_error("lr_at: warmup_frac must be in [0,1)");
  long long W = llround(tc.warmup_frac * (double)total);
  if (step < W) return tc.lr_init * (double)step / (double)W;
  long long denom = std::max<long long>(1, total - W);
  double ph = M_PI * (double)(step - W) / (double)denom;
  return tc.lr_final + 0.5 * (tc.lr_init - tc.lr_final) * (1.0 + std::cos(ph));
}

void Adam::init(const std::vector<NamedParam>& ps) {
  m.clear();
  v.clear();
  for (auto& p : ps) {
    m.push_back(Tensor(p.t->shape()));
    v.push_back(Tensor(p.t->shape()));
  }
  t = 0;
}

void Adam::step(const std::vector<NamedParam>& ps,
                const std::vector<Tensor>& grads, double lr) {
  if (ps.size() != grads.size() || ps.size() != m.size())
    throw value_error("Adam::step: parameter/gradient count mismatch");
  ++t;
  double bc1 = 1.0 - std::pow(beta1, (double)t);
  double bc2 = 1.0 - std::pow(beta2, (double)t);
  for (size_t k = 0; k < ps.size(); ++k) {
    if (!ops::all_finite(grads[k]))
      throw numeric_error("Adam::step: non-finite gradient for parameter '" +
                          ps[k].name + "'");
    Tensor& th = *ps[k].t;
    if (!th.same_shape(grads[k]))
      throw value_error("Adam::step: gradient shape mismatch for '" +
                        ps[k].name + "'");
    double* pm = m[k].data();
    double* pv = v[k].data();
    double* pt = th.data();
    const double* pg = grads[k].data();
    for (long long i = 0; i < th.numel(); ++i) {
      pm[i] = beta1 * pm[i] + (1.0 - beta1) * pg[i];
      pv[i] = beta2 * pv[i] + (1.0 - beta2) * pg[i] * pg[i];
      double mh = pm[i] / bc1;
      double vh = pv[i] / bc2;
      pt[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
  }
}

namespace {

struct ParamIndex {
  std::vector<NamedParam> ps;
  std::vector<Tensor> grads;
  int find(const std::string& name) const {
    for (size_t i = 0; i < ps.size(); ++i)
      if (ps[i].name == name) return (int)i;
    throw value_error("train: unknown parameter '" + name + "'");
  }
  void zero() {
    for (size_t i = 0; i < ps.size(); ++i) grads[i] = Tensor(ps[i].t->shape());
  }
  void accum(int idx, const Tensor& g, double w) {
    double* pa = grads[idx].data();
    const double* pg = g.data();
    for (long long i = 0; i < g.numel(); ++i) pa[i] += w * pg[i];
  }
};

// leaf handles for one chunk tape, mirroring named_params order by name
struct ChunkLeaves {
  NcdeTapeLeaves ncde;
  GruTapeLeaves gru;
  Tape::Var headW, beta;
  TrunkTapeLeaves trunk;
  std::vector<std::pair<std::string, Tape::Var>> by_name;
};

ChunkLeaves make_leaves(Tape& tape, OperatorModel& m) {
  ChunkLeaves lv;
  if (m.kind == ModelKind::Ncde) {
    lv.ncde = ncde_leaves(tape, m.ncde);
    lv.by_name.push_back({"ncde.init.W", lv.ncde.initW});
    lv.by_name.push_back({"ncde.init.b", lv.ncde.initb});
    for (size_t l = 0; l < lv.ncde.field.size(); ++l) {
      lv.by_name.push_back({strf("ncde.field.%zu.W", l), lv.ncde.field[l][0]});
      lv.by_name.push_back({strf("ncde.field.%zu.b", l), lv.ncde.field[l][1]});
    }
  } else {
    lv.gru = gru_leaves(tape, m.gru);
    for (size_t l = 0; l < lv.gru.cells.size(); ++l) {
      auto& c = lv.gru.cells[l];
      std::string b = strf("gru.%zu", l);
      lv.by_name.push_back({b + ".wr.W", c.wr[0]});
      lv.by_name.push_back({b + ".wr.b", c.wr[1]});
      lv.by_name.push_back({b + ".wz.W", c.wz[0]});
      lv.by_name.push_back({b + ".wz.b", c.wz[1]});
      lv.by_name.push_back({b + ".wn.W", c.wn[0]});
      lv.by_name.push_back({b + ".wn.b", c.wn[1]});
      lv.by_name.push_back({b + ".ur", c.ur});
      lv.by_name.push_back({b + ".uz", c.uz});
      lv.by_name.push_back({b + ".un", c.un});
    }
  }
  lv.headW = tape.leaf(m.head.W);
  lv.beta = tape.leaf(m.beta);
  lv.by_name.push_back({"head.W", lv.headW});
  lv.by_name.push_back({"beta", lv.beta});
  for (size_t l = 0; l < m.trunk.layers.size(); ++l) {
    lv.trunk.layers.push_back({tape.leaf(m.trunk.layers[l].W),
                               tape.leaf(m.trunk.layers[l].b)});
    lv.by_name.push_back({strf("trunk.%zu.W", l), lv.trunk.layers[l][0]});
    lv.by_name.push_back({strf("trunk.%zu.b", l), lv.trunk.layers[l][1]});
  }
  for (size_t l = 0; l < m.trunk.ln_gain.size(); ++l) {
    lv.trunk.ln.push_back({tape.leaf(m.trunk.ln_gain[l]),
                           tape.leaf(m.trunk.ln_bias[l])});
    lv.by_name.push_back({strf("trunk.ln.%zu.g", l), lv.trunk.ln[l][0]});
    lv.by_name.push_back({strf("trunk.ln.%zu.b", l), lv.trunk.ln[l][1]});
  }
  return lv;
}

void harvest(Tape& tape, const ChunkLeaves& lv, ParamIndex& pi, double weight) {
  for (auto& [name, var] : lv.by_name)
    pi.accum(pi.find(name), tape.grad(var), weight);
}

}  // namespace

TrainResult train(OperatorModel& model, const OperatorDataset& ds,
                  const TrainConfig& tc) {
  ds.validate();
  if (tc.epochs < 0) throw value_error("train: epochs must be >= 0");
  if (tc.batch_size < 1 || tc.chunk < 1)
    throw value_error("train: batch_size and chunk must be >= 1");
  if (tc.grad == GradMode::Adjoint) {
    if (model.kind == ModelKind::Gru)
      throw value_error(
          "train: --grad adjoint requires the NCDE branch; the GRU baseline "
          "has no continuous-time dynamics to differentiate through");
    if (model.trunk_mode == TrunkMode::Spatial)
      throw value_error(
          "train: --grad adjoint supports the spacetime trunk only; the "
          "spatial-only head reads interior latent states, outside the "
          "terminal-cost adjoint");
  }
  int N = ds.n_samples();
  int T = ds.n_times();
  int P = ds.n_points();
  int c = ds.c;
  bool spatial = model.trunk_mode == TrunkMode::Spatial;
  int q = std::min(tc.queries_per_sample, spatial ? P : T * P);

  // every training signal must live on the normalized [0,1] domain so the
  // fixed grid is shared across the batch
  for (int i = 0; i < N; ++i) {
    if (std::fabs(ds.signals[i].times.front()) > 1e-12 ||
        std::fabs(ds.signals[i].times.back() - 1.0) > 1e-12)
      throw value_error(strf(
          "train: signal %d spans [%.17g,%.17g]; expected the normalized "
          "domain [0,1]", i, ds.signals[i].times.front(),
          ds.signals[i].times.back()));
  }
  if (spatial) {
    // trunk reads latent states exactly at the query times: they must match
    // the (shared) training grid
    for (int i = 0; i < N; ++i)
      for (int k = 0; k < T; ++k)
        if (std::fabs(ds.signals[i].times[k] - ds.query_times[k]) > 1e-12)
          throw value_error(
              "train: spatial-only trunk needs observation times equal to "
              "query times for every sample");
  }
  if (model.kind == ModelKind::Gru) {
    int n_obs = ds.signals[0].n_obs();
    for (int i = 0; i < N; ++i)
      if (ds.signals[i].n_obs() != n_obs)
        throw value_error("train: GRU baseline needs equal-length sequences");
  }

  std::vector<ControlPath> paths;
  if (model.kind == ModelKind::Ncde) {
    paths.reserve(N);
    for (auto& s : ds.signals) paths.push_back(build_path(s));
  }

  // shared fixed grid
  std::vector<double> grid;
  std::vector<int> save_idx;
  if (model.kind == ModelKind::Ncde) {
    if (spatial) {
      grid = ds.query_times;  // one solver step per save interval
      save_idx.resize(T);
      std::iota(save_idx.begin(), save_idx.end(), 0);
    } else {
      grid.resize(tc.tape_steps + 1);
      for (int k = 0; k <= tc.tape_steps; ++k)
        grid[k] = (double)k / tc.tape_steps;
      grid.back() = 1.0;
    }
  }

  ParamIndex pi;
  pi.ps = named_params(model);
  pi.grads.resize(pi.ps.size());
  Adam opt;
  opt.init(pi.ps);

  int steps_per_epoch = (N + tc.batch_size - 1) / tc.batch_size;
  long long total = (long long)tc.epochs * steps_per_epoch;
  std::mt19937_64 rng(tc.seed);

  TrainResult res;
  std::vector<int> perm(N);
  std::iota(perm.begin(), perm.end(), 0);

  long long step = 0;
  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int bs = 0; bs < steps_per_epoch; ++bs) {
      int lo = bs * tc.batch_size;
      int hi = std::min(N, lo + tc.batch_size);
      int B = hi - lo;

      // all random draws happen serially up front (thread- and chunk-
      // independent)
      std::vector<std::vector<long long>> qidx(B);
      if (spatial) {
        std::uniform_int_distribution<int> uq(0, P - 1);
        std::vector<long long> shared(q);
        for (int r = 0; r < q; ++r) shared[r] = uq(rng);
        for (int b = 0; b < B; ++b) qidx[b] = shared;
      } else {
        std::uniform_int_distribution<long long> uq(0, (long long)T * P - 1);
        for (int b = 0; b < B; ++b) {
          qidx[b].resize(q);
          for (int r = 0; r < q; ++r) qidx[b][r] = uq(rng);
        }
      }

      double lr = lr_at(step, total, tc);
      pi.zero();
      double loss_acc = 0;
      long long rows_total = 0;
      for (int b = 0; b < B; ++b) rows_total += q * (spatial ? T : 1);

      if (tc.grad == GradMode::Tape) {
        for (int clo = 0; clo < B; clo += tc.chunk) {
          int chi = std::min(B, clo + tc.chunk);
          int Bc = chi - clo;
          Tape tape;
          ChunkLeaves lv = make_leaves(tape, model);
          Tape::Var loss;
          if (!spatial) {
            // gather (x,y,t) queries and targets for the chunk
            Tensor Q({Bc * q, 3}), Y({Bc * q, c});
            for (int b = 0; b < Bc; ++b) {
              int si = perm[lo + clo + b];
              for (int r = 0; r < q; ++r) {
                long long id = qidx[clo + b][r];
                long long tj = id / P, pj = id % P;
                Q.at(b * q + r, 0) = ds.query_points.at((int)pj, 0);
                Q.at(b * q + r, 1) = ds.query_points.at((int)pj, 1);
                Q.at(b * q + r, 2) = ds.query_times[tj];
                for (int ch = 0; ch < c; ++ch)
                  Y.at(b * q + r, ch) =
                      ds.targets[(long long)si * ds.target_cols() +
                                 (tj * P + pj) * c + ch];
              }
            }
            Tape::Var feat;
            if (model.kind == ModelKind::Ncde) {
              std::vector<const ControlPath*> pp(Bc);
              for (int b = 0; b < Bc; ++b) pp[b] = &paths[perm[lo + clo + b]];
              feat = ncde_tape_forward(tape, model.ncde, lv.ncde, pp, grid,
                                       tc.tape_method).zT;
            } else {
              std::vector<Tape::Var> xs;
              int n_obs = ds.signals[0].n_obs();
              int din = ds.signals[0].d_in();
              for (int t = 0; t < n_obs; ++t) {
                Tensor xt({Bc, din});
                for (int b = 0; b < Bc; ++b) {
                  int si = perm[lo + clo + b];
                  std::memcpy(xt.data() + (long long)b * din,
                              ds.signals[si].values.data() + (long long)t * din,
                              din * sizeof(double));
                }
                xs.push_back(tape.constant(std::move(xt)));
              }
              feat = gru_tape_forward(tape, model.gru, lv.gru, xs);
            }
            Tape::Var bcoef = tape.matmul(feat, lv.headW);  // (Bc, c*embed)
            Tape::Var tf = trunk_tape_features(tape, model.trunk, lv.trunk,
                                               tape.constant(std::move(Q)));
            Tape::Var pred = tape.donet_head(bcoef, tf, c, model.embed, q);
            pred = tape.add_rowvec(pred, lv.beta);
            Tape::Var diff = tape.sub(pred, tape.constant(std::move(Y)));
            loss = tape.mean(tape.mul(diff, diff));
          } else {
            // spatial-only: latent state at every grid time, one shared set
            // of spatial queries this step
            Tensor Q({q, 2});
            for (int r = 0; r < q; ++r) {
              Q.at(r, 0) = ds.query_points.at((int)qidx[0][r], 0);
              Q.at(r, 1) = ds.query_points.at((int)qidx[0][r], 1);
            }
            std::vector<const ControlPath*> pp(Bc);
            for (int b = 0; b < Bc; ++b) pp[b] = &paths[perm[lo + clo + b]];
            auto roll = ncde_tape_forward(tape, model.ncde, lv.ncde, pp, grid,
                                          tc.tape_method, save_idx);
            Tape::Var tf = trunk_tape_features(tape, model.trunk, lv.trunk,
                                               tape.constant(std::move(Q)));
            Tape::Var acc;
            for (int tj = 0; tj < T; ++tj) {
              Tensor Y({Bc * q, c});
              for (int b = 0; b < Bc; ++b) {
                int si = perm[lo + clo + b];
                for (int r = 0; r < q; ++r)
                  for (int ch = 0; ch < c; ++ch)
                    Y.at(b * q + r, ch) =
                        ds.targets[(long long)si * ds.target_cols() +
                                   ((long long)tj * P + qidx[0][r]) * c + ch];
              }
              Tape::Var bcoef = tape.matmul(roll.z_saved[tj], lv.headW);
              Tape::Var pred = tape.shared_head(bcoef, tf, c, model.embed);
              pred = tape.add_rowvec(pred, lv.beta);
              Tape::Var diff = tape.sub(pred, tape.constant(std::move(Y)));
              Tape::Var msej = tape.mean(tape.mul(diff, diff));
              acc = acc.ok() ? tape.add(acc, msej) : msej;
            }
            loss = tape.scale(acc, 1.0 / T);
          }
          tape.backward(loss);
          long long rows_chunk = (long long)Bc * q * (spatial ? T : 1);
          double w = (double)rows_chunk / (double)rows_total;
          loss_acc += tape.value(loss)[0] * w;
          harvest(tape, lv, pi, w);
        }
      } else {
        // adjoint mode: adaptive forward per sample, tape through the head,
        // adjoint backward per sample for the field/init gradients
        Tensor Zt({B, model.ncde.d});
        for (int b = 0; b < B; ++b) {
          auto r = ncde_forward(model.ncde, paths[perm[lo + b]], tc.adjoint_solver);
          std::memcpy(Zt.data() + (long long)b * model.ncde.d, r.zT.data(),
                      model.ncde.d * sizeof(double));
        }
        Tape tape;
        Tape::Var zt = tape.leaf(Zt);
        ChunkLeaves lv = make_leaves(tape, model);
        Tensor Q({B * q, 3}), Y({B * q, c});
        for (int b = 0; b < B; ++b) {
          int si = perm[lo + b];
          for (int r = 0; r < q; ++r) {
            long long id = qidx[b][r];
            long long tj = id / P, pj = id % P;
            Q.at(b * q + r, 0) = ds.query_points.at((int)pj, 0);
            Q.at(b * q + r, 1) = ds.query_points.at((int)pj, 1);
            Q.at(b * q + r, 2) = ds.query_times[tj];
            for (int ch = 0; ch < c; ++ch)
              Y.at(b * q + r, ch) =
                  ds.targets[(long long)si * ds.target_cols() +
                             (tj * P + pj) * c + ch];
          }
        }
        Tape::Var bcoef = tape.matmul(zt, lv.headW);
        Tape::Var tf = trunk_tape_features(tape, model.trunk, lv.trunk,
                                           tape.constant(std::move(Q)));
        Tape::Var pred = tape.donet_head(bcoef, tf, c, model.embed, q);
        pred = tape.add_rowvec(pred, lv.beta);
        Tape::Var diff = tape.sub(pred, tape.constant(std::move(Y)));
        Tape::Var loss = tape.mean(tape.mul(diff, diff));
        tape.backward(loss);
        loss_acc = tape.value(loss)[0];
        harvest(tape, lv, pi, 1.0);
        Tensor dZt = tape.grad(zt);  // (B,d)

        int iW = pi.find("ncde.init.W"), ib = pi.find("ncde.init.b");
        std::vector<int> fidx;
        for (size_t l = 0; l < model.ncde.field.size(); ++l) {
          fidx.push_back(pi.find(strf("ncde.field.%zu.W", l)));
          fidx.push_back(pi.find(strf("ncde.field.%zu.b", l)));
        }
        for (int b = 0; b < B; ++b) {
          Tensor zr({model.ncde.d}), ar({model.ncde.d});
          std::memcpy(zr.data(), Zt.data() + (long long)b * model.ncde.d,
                      model.ncde.d * sizeof(double));
          std::memcpy(ar.data(), dZt.data() + (long long)b * model.ncde.d,
                      model.ncde.d * sizeof(double));
          auto adj = ncde_adjoint(model.ncde, paths[perm[lo + b]], zr, ar,
                                  tc.adjoint_solver);
          pi.accum(iW, adj.ginit.W, 1.0);
          pi.accum(ib, adj.ginit.b, 1.0);
          long long off = 0;
          for (size_t l = 0; l < model.ncde.field.size(); ++l) {
            const Affine& a = model.ncde.field[l];
            Tensor gW(a.W.shape()), gb(a.b.shape());
            std::memcpy(gW.data(), adj.gtheta.data() + off,
                        a.W.numel() * sizeof(double));
            off += a.W.numel();
            std::memcpy(gb.data(), adj.gtheta.data() + off,
                        a.b.numel() * sizeof(double));
            off += a.b.numel();
            pi.accum(fidx[2 * l], gW, 1.0);
            pi.accum(fidx[2 * l + 1], gb, 1.0);
          }
        }
      }

      opt.step(pi.ps, pi.grads, lr);
      res.log_lines.push_back(strf("%lld %d %s %s", step, epoch,
                                   dbl_str(lr).c_str(),
                                   dbl_str(loss_acc).c_str()));
      res.final_loss = loss_acc;
      ++step;
    }
  }
  res.steps = step;
  return res;
}

}  // namespace ncdeon
