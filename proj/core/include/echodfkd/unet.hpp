#pragma once

// The B{b}_l{l} family: b encoder blocks of l ConvLSTM layers each with
// 2x2 max-pool between blocks, mirrored nearest-neighbor decoder with
// skip connections, 1-channel sigmoid head.

#include "echodfkd/net.hpp"

namespace echodfkd::net {

struct NetLayout {
    int blocks = 0, layers = 0;
    std::vector<int> widths;
    bool residual = false;
    bool res_proj_needed = false;
    std::vector<std::vector<CellSpec>> enc;  // [block][layer]
    ConvSpec res_proj;                       // 1x1, when needed
    struct Stage {
        ConvSpec up, merge;
    };
    std::vector<Stage> dec;  // dec[j] works at level b-1-j
    ConvSpec head;
    size_t num_params = 0;

    static NetLayout make(int blocks, int layers, const std::vector<int>& widths,
                          bool residual) {
        NetLayout lo;
        lo.blocks = blocks;
        lo.layers = layers;
        lo.widths = widths;
        lo.residual = residual;
        size_t off = 0;
        auto add_conv = [&off](int in, int out, int k) {
            ConvSpec c;
            c.in_ch = in;
            c.out_ch = out;
            c.k = k;
            c.w_off = off;
            off += c.w_size();
            c.b_off = off;
            off += out;
            return c;
        };
        for (int b = 0; b < blocks; ++b) {
            std::vector<CellSpec> block;
            for (int j = 0; j < layers; ++j) {
                CellSpec cell;
                cell.in_ch = j == 0 ? (b == 0 ? 1 : widths[b - 1]) : widths[b];
                cell.hid = widths[b];
                cell.gates = add_conv(cell.in_ch + cell.hid, 4 * cell.hid, 3);
                block.push_back(cell);
            }
            lo.enc.push_back(std::move(block));
        }
        if (residual) {
            int in = blocks == 1 ? 1 : widths[blocks - 2];
            lo.res_proj_needed = in != widths[blocks - 1];
            if (lo.res_proj_needed)
                lo.res_proj = add_conv(in, widths[blocks - 1], 1);
        }
        for (int j = 0; j < blocks; ++j) {
            int level = blocks - 1 - j;
            int in = j == 0 ? widths[blocks - 1] : widths[level + 1];
            Stage st;
            st.up = add_conv(in, widths[level], 3);
            st.merge = add_conv(2 * widths[level], widths[level], 3);
            lo.dec.push_back(st);
        }
        lo.head = add_conv(widths[0], 1, 1);
        lo.num_params = off;
        return lo;
    }
};

template <typename S>
struct NetState {
    // [block][layer] hidden and cell maps
    std::vector<std::vector<Tensor<S>>> h, c;

    void reset(const NetLayout& lo, int n, int height, int width) {
        h.assign(lo.blocks, {});
        c.assign(lo.blocks, {});
        for (int b = 0; b < lo.blocks; ++b) {
            int hh = height >> b, ww = width >> b;
            for (int j = 0; j < lo.layers; ++j) {
                h[b].emplace_back(n, lo.widths[b], hh, ww);
                c[b].emplace_back(n, lo.widths[b], hh, ww);
            }
        }
    }
};

template <typename S>
struct FrameCache {
    std::vector<std::vector<CellCache<S>>> cells;  // [block][layer]
    std::vector<Tensor<S>> block_in;               // input to each block
    std::vector<Tensor<S>> e;                      // block outputs (post residual)
    std::vector<std::vector<int32_t>> pool_argmax;
    std::vector<Tensor<S>> up_in;     // decoder stage input (pre-upsample)
    std::vector<Tensor<S>> up_big;    // upsampled input to up conv
    std::vector<Tensor<S>> u;         // post-relu up conv output
    std::vector<Tensor<S>> merge_in;  // concat(u, skip)
    std::vector<Tensor<S>> y;         // post-relu merge output
    Tensor<S> pred;                   // sigmoid output
};

template <typename S>
class UNet {
  public:
    NetLayout layout;
    std::vector<S> params;
    std::vector<S> grads;

    void zero_grads() { grads.assign(params.size(), S(0)); }

    // One strictly causal step. The cache is required (backward reads it);
    // inference reuses a scratch cache across frames.
    Tensor<S> forward_frame(const Tensor<S>& frame, NetState<S>& state,
                            Workspace<S>& ws, FrameCache<S>* cache_in) const {
        FrameCache<S> local;
        FrameCache<S>* cache = cache_in ? cache_in : &local;
        const NetLayout& lo = layout;
        if (frame.c != 1) throw ShapeError("expected 1-channel input frames");
        if (frame.h % (1 << lo.blocks) || frame.w % (1 << lo.blocks))
            throw ShapeError("spatial dims must be divisible by 2^" +
                             std::to_string(lo.blocks));
        if (cache) {
            cache->cells.assign(lo.blocks, std::vector<CellCache<S>>(lo.layers));
            cache->block_in.resize(lo.blocks);
            cache->e.resize(lo.blocks);
            cache->pool_argmax.resize(lo.blocks);
            cache->up_in.resize(lo.blocks);
            cache->up_big.resize(lo.blocks);
            cache->u.resize(lo.blocks);
            cache->merge_in.resize(lo.blocks);
            cache->y.resize(lo.blocks);
        }

        Tensor<S> cur = frame;
        for (int b = 0; b < lo.blocks; ++b) {
            if (cache) cache->block_in[b] = cur;
            Tensor<S> block_in = cur;
            for (int j = 0; j < lo.layers; ++j) {
                cell_forward(lo.enc[b][j], params.data(), cur, state.h[b][j],
                             state.c[b][j], ws,
                             cache ? &cache->cells[b][j] : nullptr);
                cur = state.h[b][j];
            }
            if (lo.residual && b == lo.blocks - 1) {
                if (lo.res_proj_needed) {
                    Tensor<S> proj;
                    conv_forward(lo.res_proj, params.data(), block_in, proj, ws);
                    for (size_t i = 0; i < cur.size(); ++i) cur.v[i] += proj.v[i];
                } else {
                    for (size_t i = 0; i < cur.size(); ++i) cur.v[i] += block_in.v[i];
                }
            }
            if (cache) cache->e[b] = cur;
            Tensor<S> pooled;
            std::vector<int32_t> argmax;
            maxpool2(cur, pooled, argmax);
            if (cache) cache->pool_argmax[b] = std::move(argmax);
            cur = std::move(pooled);
        }

        Tensor<S> y = cur;  // bottom
        for (int j = 0; j < lo.blocks; ++j) {
            int level = lo.blocks - 1 - j;
            if (cache) cache->up_in[j] = y;
            Tensor<S> big;
            upsample2(y, big);
            if (cache) cache->up_big[j] = big;
            Tensor<S> u;
            conv_forward(lo.dec[j].up, params.data(), big, u, ws);
            for (S& v : u.v) v = v > S(0) ? v : S(0);
            if (cache) cache->u[j] = u;

            const Tensor<S>& skip = cache->e[level];
            Tensor<S> m(u.n, 2 * u.c, u.h, u.w);
            size_t plane = static_cast<size_t>(u.c) * u.h * u.w;
            for (int s = 0; s < u.n; ++s) {
                std::copy(u.data() + s * plane, u.data() + (s + 1) * plane,
                          m.data() + static_cast<size_t>(s) * 2 * plane);
                std::copy(skip.data() + s * plane, skip.data() + (s + 1) * plane,
                          m.data() + static_cast<size_t>(s) * 2 * plane + plane);
            }
            if (cache) cache->merge_in[j] = m;
            conv_forward(lo.dec[j].merge, params.data(), m, y, ws);
            for (S& v : y.v) v = v > S(0) ? v : S(0);
            if (cache) cache->y[j] = y;
        }

        Tensor<S> pred;
        conv_forward(lo.head, params.data(), y, pred, ws);
        for (S& v : pred.v) v = sigmoid(v);
        if (cache) cache->pred = pred;
        return pred;
    }

    Tensor<S> infer_frame(const Tensor<S>& frame, NetState<S>& state,
                          Workspace<S>& ws) const {
        return forward_frame(frame, state, ws, nullptr);
    }

    // Backward for one frame given d(pre-sigmoid head output). Carries
    // (dh_carry, dc_carry) flow to the previous frame.
    void backward_frame(const FrameCache<S>& fc, const Tensor<S>& dpre,
                        std::vector<std::vector<Tensor<S>>>& dh_carry,
                        std::vector<std::vector<Tensor<S>>>& dc_carry,
                        Workspace<S>& ws) {
        const NetLayout& lo = layout;
        Tensor<S> dy(fc.y[lo.blocks - 1].n, fc.y[lo.blocks - 1].c,
                     fc.y[lo.blocks - 1].h, fc.y[lo.blocks - 1].w);
        conv_backward(lo.head, params.data(), fc.y[lo.blocks - 1], dpre,
                      grads.data(), &dy, ws);

        std::vector<Tensor<S>> de(lo.blocks);  // grads arriving at block outputs
        for (int b = 0; b < lo.blocks; ++b)
            de[b] = Tensor<S>(fc.e[b].n, fc.e[b].c, fc.e[b].h, fc.e[b].w);

        for (int j = lo.blocks - 1; j >= 0; --j) {
            int level = lo.blocks - 1 - j;
            // relu on y
            for (size_t i = 0; i < dy.size(); ++i)
                if (fc.y[j].v[i] <= S(0)) dy.v[i] = S(0);
            Tensor<S> dm(fc.merge_in[j].n, fc.merge_in[j].c, fc.merge_in[j].h,
                         fc.merge_in[j].w);
            conv_backward(lo.dec[j].merge, params.data(), fc.merge_in[j], dy,
                          grads.data(), &dm, ws);
            // split dm into du and skip grad
            Tensor<S> du(fc.u[j].n, fc.u[j].c, fc.u[j].h, fc.u[j].w);
            size_t plane = static_cast<size_t>(du.c) * du.h * du.w;
            for (int s = 0; s < du.n; ++s) {
                const S* src = dm.data() + static_cast<size_t>(s) * 2 * plane;
                std::copy(src, src + plane, du.data() + s * plane);
                S* dst = de[level].data() + s * plane;
                for (size_t i = 0; i < plane; ++i) dst[i] += src[plane + i];
            }
            for (size_t i = 0; i < du.size(); ++i)
                if (fc.u[j].v[i] <= S(0)) du.v[i] = S(0);
            Tensor<S> dbig(fc.up_big[j].n, fc.up_big[j].c, fc.up_big[j].h,
                           fc.up_big[j].w);
            conv_backward(lo.dec[j].up, params.data(), fc.up_big[j], du,
                          grads.data(), &dbig, ws);
            dy = Tensor<S>(fc.up_in[j].n, fc.up_in[j].c, fc.up_in[j].h,
                           fc.up_in[j].w);
            upsample2_backward(dbig, dy);
        }
        // dy is now d(bottom) = d(pool(e[b-1]))
        maxpool2_backward(dy, fc.pool_argmax[lo.blocks - 1], de[lo.blocks - 1]);

        for (int b = lo.blocks - 1; b >= 0; --b) {
            Tensor<S> dblock_in(fc.block_in[b].n, fc.block_in[b].c,
                                fc.block_in[b].h, fc.block_in[b].w);
            if (lo.residual && b == lo.blocks - 1) {
                if (lo.res_proj_needed) {
                    conv_backward(lo.res_proj, params.data(), fc.block_in[b],
                                  de[b], grads.data(), &dblock_in, ws);
                } else {
                    for (size_t i = 0; i < de[b].size(); ++i)
                        dblock_in.v[i] += de[b].v[i];
                }
            }
            // de[b] arrives at the last cell's h output
            Tensor<S> dh = de[b];
            for (size_t i = 0; i < dh.size(); ++i)
                dh.v[i] += dh_carry[b][lo.layers - 1].v[i];
            for (int j = lo.layers - 1; j >= 0; --j) {
                Tensor<S> dx(fc.cells[b][j].zin.n, lo.enc[b][j].in_ch,
                             fc.cells[b][j].zin.h, fc.cells[b][j].zin.w);
                cell_backward(lo.enc[b][j], params.data(), fc.cells[b][j], dh,
                              dc_carry[b][j], grads.data(), dx, ws);
                dh_carry[b][j] = std::move(dh);  // carry to frame t-1
                if (j > 0) {
                    dh = std::move(dx);
                    for (size_t i = 0; i < dh.size(); ++i)
                        dh.v[i] += dh_carry[b][j - 1].v[i];
                } else {
                    for (size_t i = 0; i < dx.size(); ++i)
                        dblock_in.v[i] += dx.v[i];
                }
            }
            if (b > 0) maxpool2_backward(dblock_in, fc.pool_argmax[b - 1], de[b - 1]);
        }
    }

};

template <typename S>
UNet<S> build_unet(const NetLayout& layout, uint64_t seed) {
    UNet<S> net;
    net.layout = layout;
    net.params.assign(layout.num_params, S(0));
    net.grads.assign(layout.num_params, S(0));

    std::mt19937_64 rng(seed);
    auto init_conv = [&](const ConvSpec& cs) {
        double fan_in = static_cast<double>(cs.in_ch) * cs.k * cs.k;
        double limit = std::sqrt(3.0 / fan_in);
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (size_t i = 0; i < cs.w_size(); ++i)
            net.params[cs.w_off + i] = static_cast<S>(dist(rng));
        // biases stay zero
    };
    for (const auto& block : layout.enc)
        for (const auto& cell : block) {
            init_conv(cell.gates);
            // forget-gate bias 1 stabilizes early recurrent training
            for (int ch = 0; ch < cell.hid; ++ch)
                net.params[cell.gates.b_off + cell.hid + ch] = S(1);
        }
    if (layout.res_proj_needed) init_conv(layout.res_proj);
    for (const auto& st : layout.dec) {
        init_conv(st.up);
        init_conv(st.merge);
    }
    init_conv(layout.head);
    return net;
}

}  // namespace echodfkd::net
