#include "prunelab/net.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prunelab/kernels.hpp"

namespace prunelab {

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::Input: return "input";
        case LayerKind::Conv: return "conv";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::GlobalAvgPool: return "global_avg_pool";
        case LayerKind::Dense: return "dense";
        case LayerKind::Add: return "add";
    }
    return "?";
}

namespace {

[[noreturn]] void fail_layer(int idx, const std::string& name, const std::string& msg) {
    throw std::invalid_argument("layer " + std::to_string(idx) + " (" + name + "): " + msg);
}

// ceil-mode pooling extent; windows are clipped at the border
int pool_out(int d, int k, int s) {
    return (std::max(0, d - k) + s - 1) / s + 1;
}

}  // namespace

template <typename T>
std::vector<int> layer_output_channels(const Network<T>& net) {
    std::vector<int> ch(net.layers.size(), -1);
    for (size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        switch (l.kind) {
            case LayerKind::Input: ch[i] = net.in_ch; break;
            case LayerKind::Conv: ch[i] = l.out_ch; break;
            case LayerKind::Dense: ch[i] = l.out_ch; break;
            default: ch[i] = l.input0 >= 0 ? ch[l.input0] : -1; break;
        }
    }
    return ch;
}

template <typename T>
void validate_graph(const Network<T>& net) {
    if (net.layers.empty() || net.layers[0].kind != LayerKind::Input)
        throw std::invalid_argument("network: first layer must be the input node");
    if (net.in_ch <= 0 || net.in_h <= 0 || net.in_w <= 0)
        throw std::invalid_argument("network: input extents must be positive");
    auto ch = layer_output_channels(net);
    for (size_t i = 1; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.input0 < 0 || l.input0 >= static_cast<int>(i))
            fail_layer(i, l.name, "input0 must reference an earlier layer");
        if (l.kind == LayerKind::Add) {
            if (l.input1 < 0 || l.input1 >= static_cast<int>(i))
                fail_layer(i, l.name, "input1 must reference an earlier layer");
            if (ch[l.input0] != ch[l.input1])
                fail_layer(i, l.name, "residual-add endpoints have unequal channel counts");
        }
        if (l.kind == LayerKind::Conv) {
            if (ch[l.input0] != l.in_ch)
                fail_layer(i, l.name,
                           "in_ch " + std::to_string(l.in_ch) + " != producer channels " +
                               std::to_string(ch[l.input0]));
            if (l.groups < 1 || l.in_ch % l.groups || l.out_ch % l.groups)
                fail_layer(i, l.name, "groups must divide channel counts");
            size_t want = static_cast<size_t>(l.out_ch) * (l.in_ch / l.groups) * l.kh * l.kw;
            if (l.w.numel() != want) fail_layer(i, l.name, "conv weight size mismatch");
        }
        if (l.kind == LayerKind::BatchNorm) {
            size_t c = static_cast<size_t>(ch[l.input0]);
            if (l.gamma.size() != c || l.beta.size() != c || l.running_mean.size() != c ||
                l.running_var.size() != c)
                fail_layer(i, l.name, "bn parameter length != channel count");
            if (!(l.eps > T(0))) fail_layer(i, l.name, "bn eps must be positive");
            for (T v : l.running_var)
                if (v < T(0)) fail_layer(i, l.name, "bn running_var must be nonnegative");
        }
        if (l.kind == LayerKind::Dense) {
            if (ch[l.input0] != l.in_ch)
                fail_layer(i, l.name, "dense in features != producer channels");
            if (l.w.numel() != static_cast<size_t>(l.out_ch) * l.in_ch ||
                l.bias.size() != static_cast<size_t>(l.out_ch))
                fail_layer(i, l.name, "dense weight/bias size mismatch");
        }
    }
}

template <typename T>
Tensor<T> forward(Network<T>& net, const Tensor<T>& batch, Mode mode, ForwardCache<T>* cache,
                  bool update_running) {
    const int L = net.num_layers();
    if (L == 0) throw std::invalid_argument("network: empty");
    if (batch.ndim() != 4 || batch.dim(1) != net.in_ch || batch.dim(2) != net.in_h ||
        batch.dim(3) != net.in_w)
        throw std::invalid_argument("forward: batch shape " + shape_str(batch) +
                                    " does not match network input (N," +
                                    std::to_string(net.in_ch) + "," + std::to_string(net.in_h) +
                                    "," + std::to_string(net.in_w) + ")");
    const int N = batch.dim(0);
    if (mode == Mode::Train && N < 2)
        throw std::invalid_argument(
            "forward: train mode requires batch size >= 2 (batch statistics undefined)");

    std::vector<Tensor<T>> act(L);
    ForwardCache<T> local;
    ForwardCache<T>& cc = cache ? *cache : local;
    cc.valid = false;
    cc.mode = mode;
    cc.bn_xhat.assign(L, {});
    cc.bn_invstd.assign(L, {});
    cc.pool_src.assign(L, {});

    act[0] = batch;

    for (int li = 1; li < L; ++li) {
        auto& l = net.layers[li];
        const Tensor<T>& x = act[l.input0];
        switch (l.kind) {
            case LayerKind::Input:
                fail_layer(li, l.name, "duplicate input node");
            case LayerKind::Conv: {
                if (x.ndim() != 4 || x.dim(1) != l.in_ch)
                    fail_layer(li, l.name, "conv input channels mismatch, got " + shape_str(x));
                kernels::ConvShape s{x.dim(0), l.in_ch, x.dim(2), x.dim(3),
                                     l.out_ch, l.kh,    l.kw,     l.stride,
                                     l.pad,    l.groups};
                if (!s.valid()) fail_layer(li, l.name, "conv output would be empty");
                Tensor<T> y({s.n, s.cout, s.oh(), s.ow()});
                kernels::conv2d_forward(x.data.data(), l.w.data.data(), y.data.data(), s);
                act[li] = std::move(y);
                break;
            }
            case LayerKind::BatchNorm: {
                if (x.ndim() != 4 || x.dim(1) != static_cast<int>(l.gamma.size()))
                    fail_layer(li, l.name, "bn channel mismatch, got " + shape_str(x));
                const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
                const size_t plane = static_cast<size_t>(H) * W;
                Tensor<T> y(x.shape);
                if (mode == Mode::Train) {
                    const double m = static_cast<double>(N) * plane;
                    std::vector<T> invstd(C);
                    std::vector<T>& xhat = cc.bn_xhat[li];
                    xhat.assign(x.numel(), T(0));
                    for (int c = 0; c < C; ++c) {
                        double sum = 0.0;
                        for (int n = 0; n < N; ++n) {
                            const T* p = &x.at4(n, c, 0, 0);
                            for (size_t i = 0; i < plane; ++i) sum += p[i];
                        }
                        const double mean = sum / m;
                        double sq = 0.0;
                        for (int n = 0; n < N; ++n) {
                            const T* p = &x.at4(n, c, 0, 0);
                            for (size_t i = 0; i < plane; ++i) {
                                const double d = p[i] - mean;
                                sq += d * d;
                            }
                        }
                        const double var = sq / m;  // population normalization
                        const double is = 1.0 / std::sqrt(var + static_cast<double>(l.eps));
                        invstd[c] = static_cast<T>(is);
                        const T mu = static_cast<T>(mean);
                        const T g = l.gamma[c], b = l.beta[c], isv = invstd[c];
                        for (int n = 0; n < N; ++n) {
                            const T* p = &x.at4(n, c, 0, 0);
                            T* xh = &xhat[(static_cast<size_t>(n) * C + c) * plane];
                            T* q = &y.at4(n, c, 0, 0);
                            for (size_t i = 0; i < plane; ++i) {
                                const T v = (p[i] - mu) * isv;
                                xh[i] = v;
                                q[i] = g * v + b;
                            }
                        }
                        if (update_running) {
                            const T mom = l.momentum;
                            l.running_mean[c] =
                                (T(1) - mom) * l.running_mean[c] + mom * static_cast<T>(mean);
                            l.running_var[c] =
                                (T(1) - mom) * l.running_var[c] + mom * static_cast<T>(var);
                        }
                    }
                    cc.bn_invstd[li] = std::move(invstd);
                } else {
                    for (int c = 0; c < C; ++c) {
                        const double is =
                            1.0 / std::sqrt(static_cast<double>(l.running_var[c]) +
                                            static_cast<double>(l.eps));
                        const T scale = static_cast<T>(static_cast<double>(l.gamma[c]) * is);
                        const T shift = static_cast<T>(
                            static_cast<double>(l.beta[c]) -
                            static_cast<double>(scale) * static_cast<double>(l.running_mean[c]));
                        for (int n = 0; n < N; ++n) {
                            const T* p = &x.at4(n, c, 0, 0);
                            T* q = &y.at4(n, c, 0, 0);
                            for (size_t i = 0; i < plane; ++i) q[i] = scale * p[i] + shift;
                        }
                    }
                }
                act[li] = std::move(y);
                break;
            }
            case LayerKind::ReLU: {
                Tensor<T> y(x.shape);
                for (size_t i = 0; i < x.numel(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
                act[li] = std::move(y);
                break;
            }
            case LayerKind::MaxPool: {
                if (x.ndim() != 4) fail_layer(li, l.name, "maxpool expects N,C,H,W input");
                const int C = x.dim(1), H = x.dim(2), W = x.dim(3);
                const int OH = pool_out(H, l.pool_k, l.pool_stride);
                const int OW = pool_out(W, l.pool_k, l.pool_stride);
                Tensor<T> y({N, C, OH, OW});
                std::vector<int>& src = cc.pool_src[li];
                if (cache) src.assign(y.numel(), 0);
                size_t o = 0;
                for (int n = 0; n < N; ++n) {
                    for (int c = 0; c < C; ++c) {
                        const T* p = &x.at4(n, c, 0, 0);
                        for (int i = 0; i < OH; ++i) {
                            const int h0 = i * l.pool_stride;
                            const int h1 = std::min(H, h0 + l.pool_k);
                            for (int j = 0; j < OW; ++j, ++o) {
                                const int w0 = j * l.pool_stride;
                                const int w1 = std::min(W, w0 + l.pool_k);
                                T best = p[h0 * W + w0];
                                int besti = h0 * W + w0;
                                for (int hh = h0; hh < h1; ++hh)
                                    for (int ww = w0; ww < w1; ++ww) {
                                        const int idx = hh * W + ww;
                                        if (p[idx] > best) {  // first max wins ties
                                            best = p[idx];
                                            besti = idx;
                                        }
                                    }
                                y[o] = best;
                                if (cache) src[o] = besti;
                            }
                        }
                    }
                }
                act[li] = std::move(y);
                break;
            }
            case LayerKind::GlobalAvgPool: {
                if (x.ndim() != 4) fail_layer(li, l.name, "gap expects N,C,H,W input");
                const int C = x.dim(1);
                const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
                Tensor<T> y({N, C});
                for (int n = 0; n < N; ++n)
                    for (int c = 0; c < C; ++c) {
                        double s = 0.0;
                        const T* p = &x.at4(n, c, 0, 0);
                        for (size_t i = 0; i < plane; ++i) s += p[i];
                        y.at2(n, c) = static_cast<T>(s / static_cast<double>(plane));
                    }
                act[li] = std::move(y);
                break;
            }
            case LayerKind::Dense: {
                if (x.ndim() != 2 || x.dim(1) != l.in_ch)
                    fail_layer(li, l.name, "dense input mismatch, got " + shape_str(x));
                Tensor<T> y({N, l.out_ch});
                kernels::dense_forward(x.data.data(), l.w.data.data(), l.bias.data(),
                                       y.data.data(), N, l.in_ch, l.out_ch);
                act[li] = std::move(y);
                break;
            }
            case LayerKind::Add: {
                const Tensor<T>& x1 = act[l.input1];
                if (!x.same_shape(x1))
                    fail_layer(li, l.name, "add operands differ: " + shape_str(x) + " vs " +
                                               shape_str(x1));
                Tensor<T> y(x.shape);
                for (size_t i = 0; i < x.numel(); ++i) y[i] = x[i] + x1[i];
                act[li] = std::move(y);
                break;
            }
        }
    }

    Tensor<T> out = act.back();
    if (cache) {
        cc.act = std::move(act);
        cc.valid = true;
    }
    return out;
}

template <typename T>
Tensor<T> forward_eval(const Network<T>& net, const Tensor<T>& batch) {
    // eval mode never mutates the network
    return forward(const_cast<Network<T>&>(net), batch, Mode::Eval,
                   static_cast<ForwardCache<T>*>(nullptr), false);
}

// ---- losses ----

namespace {

template <typename T>
void check_labels(const Tensor<T>& logits, const Tensor<T>& labels) {
    if (logits.ndim() != 2 || labels.ndim() != 2 || !logits.same_shape(labels))
        throw std::invalid_argument("loss: logits " + shape_str(logits) + " vs labels " +
                                    shape_str(labels));
    const int N = labels.dim(0), C = labels.dim(1);
    for (int n = 0; n < N; ++n) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += labels.at2(n, c);
        if (std::abs(s - 1.0) > 1e-6)
            throw std::invalid_argument("loss: label row " + std::to_string(n) +
                                        " sums to " + std::to_string(s) + ", expected 1");
    }
}

}  // namespace

template <typename T>
double softmax_cross_entropy(const Tensor<T>& logits, const Tensor<T>& labels) {
    check_labels(logits, labels);
    const int N = logits.dim(0), C = logits.dim(1);
    double total = 0.0;
    for (int n = 0; n < N; ++n) {
        double zmax = logits.at2(n, 0);
        for (int c = 1; c < C; ++c) zmax = std::max(zmax, static_cast<double>(logits.at2(n, c)));
        double sumexp = 0.0, dot = 0.0;
        for (int c = 0; c < C; ++c) {
            const double z = logits.at2(n, c);
            sumexp += std::exp(z - zmax);
            dot += static_cast<double>(labels.at2(n, c)) * z;
        }
        total += zmax + std::log(sumexp) - dot;
    }
    return total / N;
}

template <typename T>
double l1_gamma_penalty(const Network<T>& net) {
    double s = 0.0;
    for (const auto& l : net.layers)
        if (l.kind == LayerKind::BatchNorm)
            for (T g : l.gamma) s += std::abs(static_cast<double>(g));
    return s;
}

template <typename T>
double loss_with_penalty(const Tensor<T>& logits, const Tensor<T>& labels, const Network<T>& net,
                         double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("loss: lambda must be nonnegative");
    return softmax_cross_entropy(logits, labels) + lambda * l1_gamma_penalty(net);
}

// ---- backward ----

template <typename T>
Gradients<T> backward(const Network<T>& net, const ForwardCache<T>& cache,
                      const Tensor<T>& labels, T lambda) {
    const int L = net.num_layers();
    if (!cache.valid || cache.mode != Mode::Train ||
        cache.act.size() != static_cast<size_t>(L))
        throw std::invalid_argument("backward: requires a cached train-mode forward pass");
    if (net.layers.back().kind != LayerKind::Dense)
        throw std::invalid_argument("backward: last layer must produce logits (dense)");
    if (lambda < T(0)) throw std::invalid_argument("backward: lambda must be nonnegative");

    const Tensor<T>& logits = cache.act.back();
    check_labels(logits, labels);
    const int N = logits.dim(0), C = logits.dim(1);

    Gradients<T> grads;
    grads.resize(L);
    std::vector<Tensor<T>> dact(L);

    // d(mean CE)/dlogits = (softmax - labels) / N
    {
        Tensor<T> d(logits.shape);
        for (int n = 0; n < N; ++n) {
            double zmax = logits.at2(n, 0);
            for (int c = 1; c < C; ++c)
                zmax = std::max(zmax, static_cast<double>(logits.at2(n, c)));
            double sumexp = 0.0;
            for (int c = 0; c < C; ++c) sumexp += std::exp(logits.at2(n, c) - zmax);
            for (int c = 0; c < C; ++c) {
                const double p = std::exp(logits.at2(n, c) - zmax) / sumexp;
                d.at2(n, c) = static_cast<T>((p - static_cast<double>(labels.at2(n, c))) / N);
            }
        }
        dact[L - 1] = std::move(d);
    }

    auto add_into = [&](int idx, Tensor<T>&& g) {
        if (dact[idx].numel() == 0)
            dact[idx] = std::move(g);
        else
            for (size_t i = 0; i < g.numel(); ++i) dact[idx][i] += g[i];
    };

    for (int li = L - 1; li >= 1; --li) {
        const auto& l = net.layers[li];
        if (dact[li].numel() == 0) dact[li] = Tensor<T>(cache.act[li].shape);  // no consumer
        const Tensor<T>& dy = dact[li];
        const Tensor<T>& x = cache.act[l.input0];
        const bool need_dx = net.layers[l.input0].kind != LayerKind::Input;

        switch (l.kind) {
            case LayerKind::Input:
                break;
            case LayerKind::Conv: {
                kernels::ConvShape s{x.dim(0), l.in_ch, x.dim(2), x.dim(3),
                                     l.out_ch, l.kh,    l.kw,     l.stride,
                                     l.pad,    l.groups};
                grads.w[li] = Tensor<T>(l.w.shape);
                kernels::conv2d_backward_weight(x.data.data(), dy.data.data(),
                                                grads.w[li].data.data(), s);
                if (need_dx) {
                    Tensor<T> dx(x.shape);
                    kernels::conv2d_backward_input(dy.data.data(), l.w.data.data(),
                                                   dx.data.data(), s);
                    add_into(l.input0, std::move(dx));
                }
                break;
            }
            case LayerKind::BatchNorm: {
                const int Cc = x.dim(1), H = x.dim(2), W = x.dim(3);
                const int Nb = x.dim(0);
                const size_t plane = static_cast<size_t>(H) * W;
                const double m = static_cast<double>(Nb) * plane;
                const std::vector<T>& xhat = cache.bn_xhat[li];
                const std::vector<T>& invstd = cache.bn_invstd[li];
                if (xhat.empty() || invstd.empty())
                    fail_layer(li, l.name, "backward: bn cache missing");
                grads.gamma[li].assign(Cc, T(0));
                grads.beta[li].assign(Cc, T(0));
                Tensor<T> dx(x.shape);
                for (int c = 0; c < Cc; ++c) {
                    double dg = 0.0, db = 0.0;
                    for (int n = 0; n < Nb; ++n) {
                        const T* pdy = &dy.at4(n, c, 0, 0);
                        const T* ph = &xhat[(static_cast<size_t>(n) * Cc + c) * plane];
                        for (size_t i = 0; i < plane; ++i) {
                            dg += static_cast<double>(pdy[i]) * ph[i];
                            db += pdy[i];
                        }
                    }
                    // dL/dgamma picks up the L1 subgradient; sign(0) = 0
                    const double g = l.gamma[c];
                    const double l1 = g > 0.0 ? static_cast<double>(lambda)
                                              : (g < 0.0 ? -static_cast<double>(lambda) : 0.0);
                    grads.gamma[li][c] = static_cast<T>(dg + l1);
                    grads.beta[li][c] = static_cast<T>(db);
                    const T k1 = static_cast<T>(static_cast<double>(l.gamma[c]) *
                                                static_cast<double>(invstd[c]));
                    const T mdb = static_cast<T>(db / m);
                    const T mdg = static_cast<T>(dg / m);
                    for (int n = 0; n < Nb; ++n) {
                        const T* pdy = &dy.at4(n, c, 0, 0);
                        const T* ph = &xhat[(static_cast<size_t>(n) * Cc + c) * plane];
                        T* pdx = &dx.at4(n, c, 0, 0);
                        for (size_t i = 0; i < plane; ++i)
                            pdx[i] = k1 * (pdy[i] - mdb - ph[i] * mdg);
                    }
                }
                if (need_dx) add_into(l.input0, std::move(dx));
                break;
            }
            case LayerKind::ReLU: {
                if (!need_dx) break;
                Tensor<T> dx(x.shape);
                const Tensor<T>& y = cache.act[li];
                for (size_t i = 0; i < y.numel(); ++i) dx[i] = y[i] > T(0) ? dy[i] : T(0);
                add_into(l.input0, std::move(dx));
                break;
            }
            case LayerKind::MaxPool: {
                if (!need_dx) break;
                const std::vector<int>& src = cache.pool_src[li];
                if (src.size() != dy.numel()) fail_layer(li, l.name, "backward: pool cache missing");
                Tensor<T> dx(x.shape);
                const int Cc = x.dim(1);
                const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
                const int OH = dy.dim(2), OW = dy.dim(3);
                size_t o = 0;
                for (int n = 0; n < dy.dim(0); ++n)
                    for (int c = 0; c < Cc; ++c) {
                        T* pdx = dx.data.data() + (static_cast<size_t>(n) * Cc + c) * plane;
                        for (int i = 0; i < OH * OW; ++i, ++o) pdx[src[o]] += dy[o];
                    }
                add_into(l.input0, std::move(dx));
                break;
            }
            case LayerKind::GlobalAvgPool: {
                if (!need_dx) break;
                Tensor<T> dx(x.shape);
                const int Cc = x.dim(1);
                const size_t plane = static_cast<size_t>(x.dim(2)) * x.dim(3);
                for (int n = 0; n < x.dim(0); ++n)
                    for (int c = 0; c < Cc; ++c) {
                        const T v = dy.at2(n, c) / static_cast<T>(plane);
                        T* pdx = dx.data.data() + (static_cast<size_t>(n) * Cc + c) * plane;
                        for (size_t i = 0; i < plane; ++i) pdx[i] = v;
                    }
                add_into(l.input0, std::move(dx));
                break;
            }
            case LayerKind::Dense: {
                const int Nb = x.dim(0);
                grads.w[li] = Tensor<T>(l.w.shape);
                grads.bias[li].assign(l.bias.size(), T(0));
                kernels::dense_backward_weight(x.data.data(), dy.data.data(),
                                               grads.w[li].data.data(), grads.bias[li].data(),
                                               Nb, l.in_ch, l.out_ch);
                if (need_dx) {
                    Tensor<T> dx(x.shape);
                    kernels::dense_backward_input(dy.data.data(), l.w.data.data(),
                                                  dx.data.data(), Nb, l.in_ch, l.out_ch);
                    add_into(l.input0, std::move(dx));
                }
                break;
            }
            case LayerKind::Add: {
                Tensor<T> d0 = dy;
                Tensor<T> d1 = dy;
                if (need_dx) add_into(l.input0, std::move(d0));
                if (net.layers[l.input1].kind != LayerKind::Input)
                    add_into(l.input1, std::move(d1));
                break;
            }
        }
    }
    return grads;
}

// ---- parameter traversal ----

template <typename T>
std::vector<ParamView<T>> trainable_params(Network<T>& net) {
    std::vector<ParamView<T>> out;
    for (int li = 0; li < net.num_layers(); ++li) {
        auto& l = net.layers[li];
        switch (l.kind) {
            case LayerKind::Conv:
                out.push_back({l.name + ".weight", ParamClass::ConvWeight, li, l.w.data.data(),
                               l.w.numel()});
                break;
            case LayerKind::Dense:
                out.push_back({l.name + ".weight", ParamClass::DenseWeight, li, l.w.data.data(),
                               l.w.numel()});
                out.push_back(
                    {l.name + ".bias", ParamClass::DenseBias, li, l.bias.data(), l.bias.size()});
                break;
            case LayerKind::BatchNorm:
                out.push_back(
                    {l.name + ".gamma", ParamClass::Gamma, li, l.gamma.data(), l.gamma.size()});
                out.push_back(
                    {l.name + ".beta", ParamClass::Beta, li, l.beta.data(), l.beta.size()});
                break;
            default:
                break;
        }
    }
    return out;
}

template <typename T>
std::vector<ParamView<T>> state_tensors(Network<T>& net) {
    std::vector<ParamView<T>> out = trainable_params(net);
    for (int li = 0; li < net.num_layers(); ++li) {
        auto& l = net.layers[li];
        if (l.kind == LayerKind::BatchNorm) {
            out.push_back({l.name + ".running_mean", ParamClass::RunningMean, li,
                           l.running_mean.data(), l.running_mean.size()});
            out.push_back({l.name + ".running_var", ParamClass::RunningVar, li,
                           l.running_var.data(), l.running_var.size()});
        }
    }
    return out;
}

template <typename T>
T* grad_data(Gradients<T>& g, const ParamView<T>& p) {
    switch (p.cls) {
        case ParamClass::ConvWeight:
        case ParamClass::DenseWeight: return g.w[p.layer].data.data();
        case ParamClass::DenseBias: return g.bias[p.layer].data();
        case ParamClass::Gamma: return g.gamma[p.layer].data();
        case ParamClass::Beta: return g.beta[p.layer].data();
        default: return nullptr;
    }
}

#define PRUNELAB_NET_INSTANTIATE(T)                                                         \
    template void validate_graph<T>(const Network<T>&);                                     \
    template Tensor<T> forward<T>(Network<T>&, const Tensor<T>&, Mode, ForwardCache<T>*,    \
                                  bool);                                                    \
    template Tensor<T> forward_eval<T>(const Network<T>&, const Tensor<T>&);                \
    template double softmax_cross_entropy<T>(const Tensor<T>&, const Tensor<T>&);           \
    template double l1_gamma_penalty<T>(const Network<T>&);                                 \
    template double loss_with_penalty<T>(const Tensor<T>&, const Tensor<T>&,                \
                                         const Network<T>&, double);                        \
    template Gradients<T> backward<T>(const Network<T>&, const ForwardCache<T>&,            \
                                      const Tensor<T>&, T);                                 \
    template std::vector<int> layer_output_channels<T>(const Network<T>&);        \
    template std::vector<ParamView<T>> trainable_params<T>(Network<T>&);                    \
    template std::vector<ParamView<T>> state_tensors<T>(Network<T>&);                       \
    template T* grad_data<T>(Gradients<T>&, const ParamView<T>&);

PRUNELAB_NET_INSTANTIATE(float)
PRUNELAB_NET_INSTANTIATE(double)

#undef PRUNELAB_NET_INSTANTIATE

}  // namespace prunelab
