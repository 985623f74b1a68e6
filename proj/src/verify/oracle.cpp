#include "htp/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace htp::oracle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

Matd layer_norm_loop(const Matd& x, const Matd& gamma, const Matd& beta) {
    Matd out(x.rows(), x.cols());
    const double n = static_cast<double>(x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (Index c = 0; c < x.cols(); ++c) mean += x(r, c);
        mean /= n;
        double var = 0.0;
        for (Index c = 0; c < x.cols(); ++c) var += (x(r, c) - mean) * (x(r, c) - mean);
        var /= n;
        for (Index c = 0; c < x.cols(); ++c) {
            out(r, c) = (x(r, c) - mean) / std::sqrt(var + 1e-5) * gamma(0, c) + beta(0, c);
        }
    }
    return out;
}

Matd matmul(const Matd& a, const Matd& b) {
    Matd out = Matd::Zero(a.rows(), b.cols());
    for (Index i = 0; i < a.rows(); ++i) {
        for (Index j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (Index k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

}  // namespace

Matd similarity(const Matd& y) {
    Matd s(y.rows(), y.rows());
    const double d = static_cast<double>(y.cols());
    for (Index p = 0; p < y.rows(); ++p) {
        for (Index q = 0; q < y.rows(); ++q) {
            double dot = 0.0;
            for (Index c = 0; c < y.cols(); ++c) dot += y(p, c) * y(q, c);
            s(p, q) = dot / std::sqrt(d);
        }
    }
    return s;
}

Matd topk_mask(const Matd& s, Index eta) {
    const Index frames = s.rows();
    Matd m = Matd::Zero(frames, frames);
    for (Index p = 0; p < frames; ++p) m(p, p) = 1.0;
    if (frames < 2) return m;
    const Index keep = std::min(eta, frames - 1);
    for (Index p = 0; p < frames; ++p) {
        std::vector<std::pair<double, Index>> cand;
        for (Index q = 0; q < frames; ++q) {
            if (q != p) cand.emplace_back(s(p, q), q);
        }
        std::stable_sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        for (Index r = 0; r < keep; ++r) {
            const Index q = cand[static_cast<std::size_t>(r)].second;
            m(p, q) = 1.0;
            m(q, p) = 1.0;
        }
    }
    return m;
}

std::vector<double> softmax(const std::vector<double>& v) {
    double peak = -kInf;
    for (double x : v) {
        if (x != -kInf) peak = std::max(peak, x);
    }
    std::vector<double> out(v.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[i] == -kInf ? 0.0 : std::exp(v[i] - peak);
        total += out[i];
    }
    for (auto& x : out) x /= total;
    return out;
}

Matd attention(const Matd& queries, const Matd& context, const attn::AttnWeights<double>& w, const Matd* bias,
               std::vector<Matd>* probs_out) {
    const Index d = w.wq.rows();
    const Index dk = d / w.heads;
    const Matd qn = layer_norm_loop(queries, w.ln_gamma, w.ln_beta);
    const Matd kn = layer_norm_loop(context, w.ln_gamma, w.ln_beta);
    const Matd q = matmul(qn, w.wq);
    const Matd k = matmul(kn, w.wk);
    const Matd v = matmul(kn, w.wv);
    Matd concat = Matd::Zero(queries.rows(), d);
    if (probs_out != nullptr) probs_out->clear();
    for (Index h = 0; h < w.heads; ++h) {
        Matd probs(queries.rows(), context.rows());
        for (Index i = 0; i < queries.rows(); ++i) {
            std::vector<double> scores(static_cast<std::size_t>(context.rows()));
            for (Index j = 0; j < context.rows(); ++j) {
                double dot = 0.0;
                for (Index c = 0; c < dk; ++c) dot += q(i, h * dk + c) * k(j, h * dk + c);
                scores[static_cast<std::size_t>(j)] = dot / std::sqrt(static_cast<double>(dk));
                if (bias != nullptr) scores[static_cast<std::size_t>(j)] += (*bias)(i, j);
            }
            const auto p = softmax(scores);
            for (Index j = 0; j < context.rows(); ++j) probs(i, j) = p[static_cast<std::size_t>(j)];
            for (Index c = 0; c < dk; ++c) {
                double acc = 0.0;
                for (Index j = 0; j < context.rows(); ++j) acc += probs(i, j) * v(j, h * dk + c);
                concat(i, h * dk + c) = acc;
            }
        }
        if (probs_out != nullptr) probs_out->push_back(probs);
    }
    Matd out = matmul(concat, w.wo);
    for (Index i = 0; i < out.rows(); ++i) {
        for (Index c = 0; c < d; ++c) out(i, c) += queries(i, c);
    }
    return out;
}

Matd ffn(const Matd& x, const attn::FfnWeights<double>& w) {
    const Matd xn = layer_norm_loop(x, w.ln_gamma, w.ln_beta);
    Matd hidden = matmul(xn, w.w1);
    for (Index i = 0; i < hidden.rows(); ++i) {
        for (Index c = 0; c < hidden.cols(); ++c) hidden(i, c) = gelu(hidden(i, c) + w.b1(0, c));
    }
    Matd out = matmul(hidden, w.w2);
    for (Index i = 0; i < out.rows(); ++i) {
        for (Index c = 0; c < out.cols(); ++c) out(i, c) += w.b2(0, c) + x(i, c);
    }
    return out;
}

Matd tcep_refine_joint(const Matd& y, const Matd& fused, const Matd& w, Index eta) {
    const Index frames = y.rows();
    const Matd s = similarity(y);
    const Matd m = topk_mask(s, eta);
    Matd a(frames, frames);
    for (Index p = 0; p < frames; ++p) {
        std::vector<double> row(static_cast<std::size_t>(frames));
        for (Index q = 0; q < frames; ++q) row[static_cast<std::size_t>(q)] = m(p, q) == 1.0 ? s(p, q) : -kInf;
        const auto probs = softmax(row);
        for (Index q = 0; q < frames; ++q) a(p, q) = fused(p, q) * probs[static_cast<std::size_t>(q)];
    }
    const Matd mixed = matmul(matmul(a, y), w);
    Matd out(frames, y.cols());
    for (Index p = 0; p < frames; ++p) {
        for (Index c = 0; c < y.cols(); ++c) out(p, c) = y(p, c) + gelu(mixed(p, c));
    }
    return out;
}

std::vector<double> knn_density(const Matd& distance, Index k) {
    const Index frames = distance.rows();
    if (frames < 2) return std::vector<double>(static_cast<std::size_t>(frames), 1.0);
    const Index kk = std::min(k, frames - 1);
    std::vector<double> phi(static_cast<std::size_t>(frames));
    for (Index p = 0; p < frames; ++p) {
        std::vector<double> others;
        for (Index q = 0; q < frames; ++q) {
            if (q != p) others.push_back(distance(p, q));
        }
        std::sort(others.begin(), others.end());
        const double radius = others[static_cast<std::size_t>(kk - 1)];
        double acc = 0.0;
        for (Index q = 0; q < frames; ++q) {
            if (q != p && distance(p, q) <= radius) acc += distance(p, q) * distance(p, q);
        }
        phi[static_cast<std::size_t>(p)] = std::exp(-acc / static_cast<double>(kk));
    }
    return phi;
}

MgptpTrace mgptp_select(const Ten3d& tokens, const Ten3d& masks, double threshold, Index k, Index keep) {
    const Index joints = tokens.d0();
    const Index frames = tokens.d1();
    const Index width = tokens.d2();

    // joint pooling
    Matd z = Matd::Zero(frames, width);
    Matd pooled = Matd::Zero(frames, frames);
    for (Index j = 0; j < joints; ++j) {
        for (Index p = 0; p < frames; ++p) {
            for (Index c = 0; c < width; ++c) z(p, c) += tokens(j, p, c);
            for (Index q = 0; q < frames; ++q) pooled(p, q) += masks(j, p, q);
        }
    }
    for (Index p = 0; p < frames; ++p) {
        for (Index c = 0; c < width; ++c) z(p, c) /= static_cast<double>(joints);
        for (Index q = 0; q < frames; ++q) pooled(p, q) = pooled(p, q) / static_cast<double>(joints) >= threshold ? 1.0 : 0.0;
    }

    // distances with the out-of-mask sentinel
    Matd dist = Matd::Zero(frames, frames);
    double largest = 0.0;
    for (Index p = 0; p < frames; ++p) {
        for (Index q = 0; q < frames; ++q) {
            if (p == q) continue;
            double sq = 0.0;
            for (Index c = 0; c < width; ++c) sq += (z(p, c) - z(q, c)) * (z(p, c) - z(q, c));
            dist(p, q) = std::sqrt(sq) * (1.0 / std::sqrt(static_cast<double>(width)));
            largest = std::max(largest, dist(p, q));
        }
    }
    const double sentinel = largest + 1e-6;
    for (Index p = 0; p < frames; ++p) {
        for (Index q = 0; q < frames; ++q) {
            if (p != q && pooled(p, q) != 1.0) dist(p, q) = sentinel;
        }
    }

    MgptpTrace trace;
    trace.density = knn_density(dist, k);

    std::vector<double> support(static_cast<std::size_t>(frames));
    for (Index p = 0; p < frames; ++p) {
        double s = 0.0;
        for (Index q = 0; q < frames; ++q) s += pooled(p, q);
        support[static_cast<std::size_t>(p)] = s > 0.0 ? s : -kInf;
    }
    const auto weights = softmax(support);
    trace.response.resize(static_cast<std::size_t>(frames));
    for (Index p = 0; p < frames; ++p) {
        trace.response[static_cast<std::size_t>(p)] = trace.density[static_cast<std::size_t>(p)] * weights[static_cast<std::size_t>(p)];
    }

    trace.separation.assign(static_cast<std::size_t>(frames), 0.0);
    for (Index p = 0; p < frames; ++p) {
        const double rp = trace.response[static_cast<std::size_t>(p)];
        double best = kInf;
        double far = 0.0;
        for (Index q = 0; q < frames; ++q) {
            far = std::max(far, dist(p, q));
            const double rq = trace.response[static_cast<std::size_t>(q)];
            const bool higher = rq > rp || (rq == rp && q < p);
            if (q != p && higher) best = std::min(best, dist(p, q));
        }
        trace.separation[static_cast<std::size_t>(p)] = best == kInf ? far : best;
    }

    // repeated argmax, lower index first on equal scores
    std::vector<double> score(static_cast<std::size_t>(frames));
    for (Index p = 0; p < frames; ++p) {
        score[static_cast<std::size_t>(p)] = trace.separation[static_cast<std::size_t>(p)] * trace.response[static_cast<std::size_t>(p)];
    }
    std::vector<bool> taken(static_cast<std::size_t>(frames), false);
    for (Index r = 0; r < keep; ++r) {
        Index pick = -1;
        for (Index p = 0; p < frames; ++p) {
            if (taken[static_cast<std::size_t>(p)]) continue;
            if (pick < 0 || score[static_cast<std::size_t>(p)] > score[static_cast<std::size_t>(pick)]) pick = p;
        }
        taken[static_cast<std::size_t>(pick)] = true;
    }
    for (Index p = 0; p < frames; ++p) {
        if (taken[static_cast<std::size_t>(p)]) trace.selected.push_back(p);
    }
    return trace;
}

}  // namespace htp::oracle
