#pragma once

#include <array>
#include <cstring>
#include <string>
#include <vector>

#include "ncdeon/gru.hpp"
#include "ncdeon/ncde.hpp"
#include "ncdeon/nn.hpp"
#include "ncdeon/tape.hpp"

namespace ncdeon {

inline constexpr double kLayerNormEps = 1e-5;

enum class ModelKind { Ncde, Gru };
enum class TrunkMode { Spacetime, Spatial };

// Trunk MLP: affine -> layer_norm -> gelu per hidden layer, bare affine out.
// Spacetime mode takes (x,y,t) queries; spatial mode takes (x,y).
struct TrunkParams {
  int in_dim = 3, width = 200, depth = 6, embed = 128;
  std::vector<Affine> layers;
  std::vector<Tensor> ln_gain, ln_bias;
};

struct TrunkTapeLeaves {
  std::vector<std::array<Tape::Var, 2>> layers;  // W,b
  std::vector<std::array<Tape::Var, 2>> ln;      // gain,bias
};

Tensor trunk_features(const TrunkParams&, const Tensor& queries);
Tape::Var trunk_tape_features(Tape&, const TrunkParams&, const TrunkTapeLeaves&,
                              Tape::Var queries);
TrunkParams make_trunk(int in_dim, int width, int depth, int embed,
                       std::mt19937_64&);

struct ModelSpec {
  ModelKind kind = ModelKind::Ncde;
  TrunkMode trunk_mode = TrunkMode::Spacetime;
  int d_in = 1;      // observed signal channels
  int c = 1;         // output field channels
  int latent = 64;   // NCDE latent dimension
  int width = 200;   // MLP / GRU hidden width
  int depth = 6;     // layers (branch nets and trunk)
  int embed = 128;   // DeepONet inner-product width
};

// Branch (NCDE or GRU) + projection head + bias + trunk.  The head maps the
// branch feature (latent for NCDE, final hidden for GRU) to c*embed branch
// coefficients; predictions are the per-channel inner product with trunk
// features plus beta.
struct OperatorModel {
  ModelKind kind = ModelKind::Ncde;
  TrunkMode trunk_mode = TrunkMode::Spacetime;
  int c = 1;
  int embed = 128;
  NcdeParams ncde;
  GruParams gru;
  Affine head;   // bias unused; beta is the output bias
  Tensor beta;   // (c)
  TrunkParams trunk;
};

OperatorModel make_model(const ModelSpec&, std::mt19937_64&);

struct NamedParam {
  std::string name;
  Tensor* t;
};
// fixed enumeration order: branch, head, beta, trunk
std::vector<NamedParam> named_params(OperatorModel&);

// one signal -> branch coefficient row (1, c*embed); NCDE path uses the
// adaptive solver config, GRU consumes the path's observation values
Tensor branch_embed(const OperatorModel&, const ControlPath&, const SolverConfig&);

// b (S, c*embed) x queries (Q, in_dim) -> (S*Q? no: S=1 rows per call)  —
// predictions (Q, c) for one sample's coefficient row b (1, c*embed)
Tensor predict_spacetime(const OperatorModel&, const Tensor& b,
                         const Tensor& queries);

// spatial-only variant: z_states (T,d) on the training time grid; j selects
// the grid time.  Off-grid j throws (defined refusal, not an approximation).
Tensor predict_spatial_only(const OperatorModel&, const Tensor& z_states,
                            int j, const Tensor& xy_queries);

}  // namespace ncdeon
