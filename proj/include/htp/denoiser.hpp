#pragma once

// Full denoising network: pose embedding, spatial GCN and MHSA, TCEP, masked
// temporal blocks, token pruning, standard blocks on the condensed sequence,
// cross attention back to full length, and the 3D head.

#include "htp/attention.hpp"
#include "htp/mgptp.hpp"
#include "htp/tcep.hpp"
#include "htp/tensor.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace htp::model {

/// Failure inside one pipeline stage; the message starts with the stage name.
class StageError : public std::runtime_error {
public:
    StageError(const std::string& stage, const std::string& what)
        : std::runtime_error("stage '" + stage + "': " + what), stage_(stage) {}
    const std::string& stage() const { return stage_; }

private:
    std::string stage_;
};

struct DenoiserConfig {
    Index joints = 17;
    Index frames = 243;
    Index width = 512;
    Index keep = 54;        // frames retained by the pruner (f)
    Index eta = 162;        // neighbours per frame in the temporal mask
    Index blocks = 8;       // dual blocks in total (n)
    Index sft_blocks = 3;   // masked blocks before pruning (n1)
    Index heads = 8;
    Index mlp_ratio = 2;
    double pool_threshold = 0.5;
    Index knn = 5;
    bool recompute_mask_per_block = false;
    Matd skeleton;  // J x J adjacency with self-loops; empty selects the default

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;

    /// Skeleton adjacency actually used (default when `skeleton` is empty).
    Matd skeleton_adjacency() const;
};

/// Human3.6M 17-joint skeleton with self-loops.
Matd h36m_skeleton();

/// Chain over J joints with self-loops; default for J != 17.
Matd chain_skeleton(Index joints);

/// D^{-1/2} A D^{-1/2}; A must be symmetric with a nonzero diagonal.
Matd normalized_adjacency(const Matd& adjacency);

struct BlockParams {
    attn::AttnWeights<double> attn;
    attn::FfnWeights<double> ffn;
};

struct DualBlockParams {
    BlockParams spatial;
    BlockParams temporal;
};

struct DenoiserParams {
    Matd embed_w, embed_b;  // 5 x D, 1 x D
    Matd gcn_w;             // D x D
    Matd spatial_pos;       // J x D
    Matd temporal_pos;      // F x D
    BlockParams pre_spatial;
    Matd tcep_w;           // D x D
    Matd global_topology;  // F x F
    Matd time_w1, time_b1, time_w2, time_b2;
    std::vector<DualBlockParams> blocks;
    attn::AttnWeights<double> cross;
    Matd head_ln_gamma, head_ln_beta, head_w, head_b;  // head_w is D x 3

    /// Calls fn(name, matrix) for every parameter in a fixed order.
    void visit(const std::function<void(const std::string&, Matd&)>& fn);
    void visit(const std::function<void(const std::string&, const Matd&)>& fn) const;
};

/// Parameters with every matrix allocated to its configured shape and zeroed
/// (LayerNorm gains set to 1).
DenoiserParams zero_params(const DenoiserConfig& cfg);

/// Seeded initialisation: weights uniform in +-1/sqrt(fan_in), LayerNorm gains
/// 1 and offsets 0, positional embeddings uniform in +-0.1, global topology 0.
DenoiserParams init_params(const DenoiserConfig& cfg, std::uint64_t seed);

/// Throws std::invalid_argument when a parameter's shape disagrees with `cfg`.
void validate_params(const DenoiserConfig& cfg, const DenoiserParams& params);

/// Optional side outputs of one forward pass.
struct ForwardTrace {
    tcep::TemporalMask<double> mask;
    std::vector<Index> retained;
};

Ten3d pose_embed(const Ten3d& noisy, const Ten3d& keypoints, const Matd& w, const Matd& b);

/// Y + GELU(A_norm Y W) for every frame, mixing over joints.
Ten3d spatial_gcn(const Ten3d& tokens, const Matd& adjacency, const Matd& w);

/// Attention over joints within each frame, then the MLP block.
Ten3d spatial_mhsa(const Ten3d& tokens, const BlockParams& p);

/// Temporal attention restricted by `mask`, then the MLP block.
Ten3d sft_block(const Ten3d& tokens, const attn::AdditiveMask<double>& mask, const BlockParams& p);

/// Unmasked temporal attention, then the MLP block.
Ten3d dense_temporal_block(const Ten3d& tokens, const BlockParams& p);

/// Sinusoidal code of t: sin(t w_i) in the first half, cos(t w_i) in the second,
/// w_i = 10000^(-i / (D/2)). An odd trailing slot stays 0.
RowVecd sinusoidal_embedding(double t, Index width);

/// Sinusoid -> affine -> GELU -> affine.
RowVecd timestep_embedding(double t, const DenoiserParams& params);

/// One denoiser pass: (J x F x 3 noisy pose, J x F x 2 keypoints, t) -> J x F x 3.
Ten3d denoise_forward(const Ten3d& noisy, const Ten3d& keypoints, double t, const DenoiserConfig& cfg,
                      const DenoiserParams& params, ForwardTrace* trace = nullptr);

/// Same stages and weights without masks or pruning.
Ten3d dense_reference_forward(const Ten3d& noisy, const Ten3d& keypoints, double t, const DenoiserConfig& cfg,
                              const DenoiserParams& params);

}  // namespace htp::model
