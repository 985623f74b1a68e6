#pragma once

// Multi-head attention over token sequences, with an optional additive
// {0, -inf} mask, plus the LayerNorm-MLP block that follows it.

#include "htp/tcep.hpp"
#include "htp/tensor.hpp"

#include <string>

namespace htp::attn {

/// Pre-LN attention weights. Projections are D x D; the LayerNorm pair is 1 x D.
template <typename Scalar>
struct AttnWeights {
    Mat<Scalar> wq, wk, wv, wo;
    Mat<Scalar> ln_gamma, ln_beta;
    Index heads = 1;

    Index width() const { return wq.rows(); }
    Index head_dim() const { return width() / heads; }

    void validate() const {
        const Index d = width();
        for (const Mat<Scalar>* m : {&wq, &wk, &wv, &wo}) {
            if (m->rows() != d || m->cols() != d) {
                throw DimensionError("AttnWeights: projection " + shape_str(*m) + " is not " + shape_str(d, d));
            }
        }
        if (ln_gamma.size() != d || ln_beta.size() != d) {
            throw DimensionError("AttnWeights: layer norm width does not match " + std::to_string(d));
        }
        if (heads < 1 || d % heads != 0) {
            throw DimensionError("AttnWeights: width " + std::to_string(d) + " not divisible by " +
                                 std::to_string(heads) + " heads");
        }
    }
};

/// Pre-LN two-layer MLP: W1 is D x rD, W2 is rD x D.
template <typename Scalar>
struct FfnWeights {
    Mat<Scalar> ln_gamma, ln_beta;
    Mat<Scalar> w1, b1, w2, b2;
};

/// Additive mask, J x F x F, entries 0 (keep) or -inf (drop).
template <typename Scalar>
struct AdditiveMask {
    Ten3<Scalar> values;
};

template <typename Scalar>
AdditiveMask<Scalar> to_additive_mask(const Ten3<Scalar>& binary) {
    AdditiveMask<Scalar> out{Ten3<Scalar>(binary.d0(), binary.d1(), binary.d2())};
    for (Index i = 0; i < binary.size(); ++i) {
        const Scalar v = binary.data()[i];
        if (v == Scalar(1)) {
            out.values.data()[i] = 0;
        } else if (v == Scalar(0)) {
            out.values.data()[i] = neg_inf<Scalar>();
        } else {
            throw std::invalid_argument("to_additive_mask: mask not binary (entry " + std::to_string(i) + " = " +
                                        std::to_string(v) + ")");
        }
    }
    return out;
}

template <typename Scalar>
AdditiveMask<Scalar> to_additive_mask(const tcep::TemporalMask<Scalar>& mask) {
    return to_additive_mask(mask.masks);
}

/// Row-softmax of (Q K^T / sqrt(d_k) + bias). `bias` may be null (no mask).
template <typename DQ, typename DK>
Mat<typename DQ::Scalar> attention_probs(const Eigen::MatrixBase<DQ>& q, const Eigen::MatrixBase<DK>& k,
                                         const Mat<typename DQ::Scalar>* bias) {
    using Scalar = typename DQ::Scalar;
    Mat<Scalar> scores = (q * k.transpose()) / std::sqrt(static_cast<Scalar>(q.cols()));
    if (bias != nullptr) {
        require_same_shape(scores, *bias, "attention_probs");
        scores += *bias;
    }
    return softmax_rows(scores);
}

/// Attention of `queries` (L x D) over `context` (l x D) with residual onto the
/// raw queries. Both inputs are layer-normalised with the block's pair first.
/// `bias` is an optional L x l additive mask.
template <typename Scalar>
Mat<Scalar> attend(const Eigen::Ref<const Mat<Scalar>>& queries, const Eigen::Ref<const Mat<Scalar>>& context,
                   const AttnWeights<Scalar>& w, const Mat<Scalar>* bias) {
    w.validate();
    if (queries.cols() != w.width() || context.cols() != w.width()) {
        throw DimensionError("attend: tokens " + shape_str(queries) + " / " + shape_str(context) +
                             " do not match width " + std::to_string(w.width()));
    }
    const Mat<Scalar> qn = layer_norm(queries, w.ln_gamma, w.ln_beta);
    const Mat<Scalar> kn = layer_norm(context, w.ln_gamma, w.ln_beta);
    const Mat<Scalar> q = qn * w.wq;
    const Mat<Scalar> k = kn * w.wk;
    const Mat<Scalar> v = kn * w.wv;
    const Index dk = w.head_dim();
    Mat<Scalar> heads(queries.rows(), w.width());
    for (Index h = 0; h < w.heads; ++h) {
        const Mat<Scalar> probs = attention_probs(q.middleCols(h * dk, dk), k.middleCols(h * dk, dk), bias);
        heads.middleCols(h * dk, dk) = probs * v.middleCols(h * dk, dk);
    }
    return heads * w.wo + queries;
}

/// Self-attention over one sequence.
template <typename Scalar>
Mat<Scalar> self_attend(const Eigen::Ref<const Mat<Scalar>>& x, const AttnWeights<Scalar>& w,
                        const Mat<Scalar>* bias) {
    return attend<Scalar>(x, x, w, bias);
}

/// Per-head attention probabilities for one sequence; used by the sparsity checks.
template <typename Scalar>
std::vector<Mat<Scalar>> head_probs(const Eigen::Ref<const Mat<Scalar>>& x, const AttnWeights<Scalar>& w,
                                    const Mat<Scalar>* bias) {
    w.validate();
    const Mat<Scalar> xn = layer_norm(x, w.ln_gamma, w.ln_beta);
    const Mat<Scalar> q = xn * w.wq;
    const Mat<Scalar> k = xn * w.wk;
    const Index dk = w.head_dim();
    std::vector<Mat<Scalar>> out;
    for (Index h = 0; h < w.heads; ++h) {
        out.push_back(attention_probs(q.middleCols(h * dk, dk), k.middleCols(h * dk, dk), bias));
    }
    return out;
}

/// Temporal attention for every joint restricted by the additive mask. The
/// mask is shared by all heads.
template <typename Scalar>
Ten3<Scalar> sft_mhsa(const Ten3<Scalar>& tokens, const AdditiveMask<Scalar>& mask, const AttnWeights<Scalar>& w) {
    const auto& m = mask.values;
    if (m.d0() != tokens.d0() || m.d1() != tokens.d1() || m.d2() != tokens.d1()) {
        throw DimensionError("sft_mhsa: mask " + m.shape() + " does not match tokens " + tokens.shape());
    }
    Ten3<Scalar> out(tokens.d0(), tokens.d1(), tokens.d2());
    for (Index j = 0; j < tokens.d0(); ++j) {
        const Mat<Scalar> bias = m.slice(j);
        out.slice(j) = self_attend<Scalar>(tokens.slice(j), w, &bias);
    }
    return out;
}

/// Unmasked attention along axis 1 for every leading slice.
template <typename Scalar>
Ten3<Scalar> dense_mhsa(const Ten3<Scalar>& tokens, const AttnWeights<Scalar>& w) {
    Ten3<Scalar> out(tokens.d0(), tokens.d1(), tokens.d2());
    for (Index j = 0; j < tokens.d0(); ++j) {
        out.slice(j) = self_attend<Scalar>(tokens.slice(j), w, nullptr);
    }
    return out;
}

template <typename Scalar>
Mat<Scalar> ffn(const Eigen::Ref<const Mat<Scalar>>& x, const FfnWeights<Scalar>& w) {
    if (w.w1.rows() != x.cols() || w.w2.cols() != x.cols() || w.w1.cols() != w.w2.rows()) {
        throw DimensionError("ffn_block: tokens " + shape_str(x) + " vs W1 " + shape_str(w.w1) + " / W2 " +
                             shape_str(w.w2));
    }
    const Mat<Scalar> hidden = gelu(linear(layer_norm(x, w.ln_gamma, w.ln_beta), w.w1, w.b1));
    return linear(hidden, w.w2, w.b2) + x;
}

/// Y + MLP(LN(Y)) applied to every token.
template <typename Scalar>
Ten3<Scalar> ffn_block(const Ten3<Scalar>& tokens, const FfnWeights<Scalar>& w) {
    Ten3<Scalar> out(tokens.d0(), tokens.d1(), tokens.d2());
    out.rows_view() = ffn<Scalar>(tokens.rows_view(), w);
    return out;
}

/// Every query row of `full` attends over the rows of `condensed` for each
/// leading slice; the output keeps the full length.
template <typename Scalar>
Ten3<Scalar> cross_mhsa(const Ten3<Scalar>& full, const Ten3<Scalar>& condensed, const AttnWeights<Scalar>& w) {
    if (condensed.d1() == 0) {
        throw DimensionError("cross_mhsa: condensed sequence is empty");
    }
    if (full.d0() != condensed.d0() || full.d2() != condensed.d2()) {
        throw DimensionError("cross_mhsa: full " + full.shape() + " vs condensed " + condensed.shape());
    }
    Ten3<Scalar> out(full.d0(), full.d1(), full.d2());
    for (Index j = 0; j < full.d0(); ++j) {
        out.slice(j) = attend<Scalar>(full.slice(j), condensed.slice(j), w, nullptr);
    }
    return out;
}

}  // namespace htp::attn
