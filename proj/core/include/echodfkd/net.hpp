#pragma once

// Scalar-generic ConvLSTM / U-Net internals. Training instantiates float
// (BLAS gemm); gradient checks instantiate double.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "echodfkd/tensor.hpp"

namespace echodfkd::net {

// ---------- parameter bookkeeping ----------

struct ConvSpec {
    int in_ch = 0, out_ch = 0, k = 3;
    size_t w_off = 0, b_off = 0;
    size_t w_size() const {
        return static_cast<size_t>(out_ch) * in_ch * k * k;
    }
};

struct CellSpec {
    ConvSpec gates;  // (in+hid) -> 4*hid, gate order i,f,o,g
    int in_ch = 0, hid = 0;
    bool peephole = false;
    size_t peep_off = 0;  // 3*hid per-channel weights (i,f,o) when enabled
};

// ---------- elementwise ----------

template <typename S>
S sigmoid(S x) {
    return S(1) / (S(1) + std::exp(-x));
}

// ---------- im2col convolution ----------

template <typename S>
void im2col(const S* x, int c, int h, int w, int k, S* col) {
    int pad = k / 2;
    size_t hw = static_cast<size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                S* dst = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) * hw;
                const S* src = x + static_cast<size_t>(ci) * hw;
                for (int y = 0; y < h; ++y) {
                    int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) {
                        for (int xx = 0; xx < w; ++xx) dst[static_cast<size_t>(y) * w + xx] = S(0);
                        continue;
                    }
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = xx + kx - pad;
                        dst[static_cast<size_t>(y) * w + xx] =
                            (sx < 0 || sx >= w) ? S(0) : src[static_cast<size_t>(sy) * w + sx];
                    }
                }
            }
}

template <typename S>
void col2im_add(const S* col, int c, int h, int w, int k, S* x) {
    int pad = k / 2;
    size_t hw = static_cast<size_t>(h) * w;
    for (int ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const S* src = col + ((static_cast<size_t>(ci) * k + ky) * k + kx) * hw;
                S* dst = x + static_cast<size_t>(ci) * hw;
                for (int y = 0; y < h; ++y) {
                    int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) continue;
                    for (int xx = 0; xx < w; ++xx) {
                        int sx = xx + kx - pad;
                        if (sx < 0 || sx >= w) continue;
                        dst[static_cast<size_t>(sy) * w + sx] += src[static_cast<size_t>(y) * w + xx];
                    }
                }
            }
}

// Scratch buffers shared across calls to avoid per-frame allocation.
template <typename S>
struct Workspace {
    std::vector<S> col;

    S* col_buf(size_t n) {
        if (col.size() < n) col.resize(n);
        return col.data();
    }
};

template <typename S>
void conv_forward(const ConvSpec& cs, const S* params, const Tensor<S>& x,
                  Tensor<S>& y, Workspace<S>& ws) {
    if (x.c != cs.in_ch) throw ShapeError("conv input channels: got " +
                                          std::to_string(x.c) + ", want " +
                                          std::to_string(cs.in_ch));
    size_t hw = static_cast<size_t>(x.h) * x.w;
    size_t ck2 = static_cast<size_t>(cs.in_ch) * cs.k * cs.k;
    if (y.n != x.n || y.c != cs.out_ch || y.h != x.h || y.w != x.w)
        y = Tensor<S>(x.n, cs.out_ch, x.h, x.w);
    S* col = ws.col_buf(ck2 * hw);
    const S* wp = params + cs.w_off;
    const S* bp = params + cs.b_off;
    for (int s = 0; s < x.n; ++s) {
        const S* xs = x.data() + static_cast<size_t>(s) * x.c * hw;
        S* ys = y.data() + static_cast<size_t>(s) * cs.out_ch * hw;
        if (cs.k == 1) {
            gemm(cs.out_ch, static_cast<int>(hw), cs.in_ch, wp, xs, ys);
        } else {
            im2col(xs, cs.in_ch, x.h, x.w, cs.k, col);
            gemm(cs.out_ch, static_cast<int>(hw), static_cast<int>(ck2), wp, col, ys);
        }
        for (int o = 0; o < cs.out_ch; ++o) {
            S b = bp[o];
            S* row = ys + static_cast<size_t>(o) * hw;
            for (size_t i = 0; i < hw; ++i) row[i] += b;
        }
    }
}

// Accumulates into grads; dx (optional) is accumulated as well.
template <typename S>
void conv_backward(const ConvSpec& cs, const S* params, const Tensor<S>& x,
                   const Tensor<S>& dy, S* grads, Tensor<S>* dx,
                   Workspace<S>& ws) {
    size_t hw = static_cast<size_t>(x.h) * x.w;
    size_t ck2 = static_cast<size_t>(cs.in_ch) * cs.k * cs.k;
    S* col = ws.col_buf(ck2 * hw * 2);
    S* dcol = col + ck2 * hw;
    S* gw = grads + cs.w_off;
    S* gb = grads + cs.b_off;
    for (int s = 0; s < x.n; ++s) {
        const S* xs = x.data() + static_cast<size_t>(s) * x.c * hw;
        const S* dys = dy.data() + static_cast<size_t>(s) * cs.out_ch * hw;
        if (cs.k == 1) {
            gemm(cs.out_ch, cs.in_ch, static_cast<int>(hw), dys, xs, gw, false, true, true);
        } else {
            im2col(xs, cs.in_ch, x.h, x.w, cs.k, col);
            gemm(cs.out_ch, static_cast<int>(ck2), static_cast<int>(hw), dys, col, gw,
                 false, true, true);
        }
        for (int o = 0; o < cs.out_ch; ++o) {
            const S* row = dys + static_cast<size_t>(o) * hw;
            S acc = S(0);
            for (size_t i = 0; i < hw; ++i) acc += row[i];
            gb[o] += acc;
        }
        if (dx) {
            S* dxs = dx->data() + static_cast<size_t>(s) * cs.in_ch * hw;
            if (cs.k == 1) {
                std::vector<S> tmp(ck2 * hw);
                gemm(cs.in_ch, static_cast<int>(hw), cs.out_ch, params + cs.w_off,
                     dys, tmp.data(), true, false, false);
                for (size_t i = 0; i < ck2 * hw; ++i) dxs[i] += tmp[i];
            } else {
                gemm(static_cast<int>(ck2), static_cast<int>(hw), cs.out_ch,
                     params + cs.w_off, dys, dcol, true, false, false);
                col2im_add(dcol, cs.in_ch, x.h, x.w, cs.k, dxs);
            }
        }
    }
}

// ---------- ConvLSTM cell ----------

template <typename S>
struct CellCache {
    Tensor<S> zin;              // concat(x, h_prev)
    Tensor<S> ia, fa, oa, ga;   // post-activation gates
    Tensor<S> c_prev, c, tanh_c;
};

// h/c state shape: [n, hid, h, w]
template <typename S>
void cell_forward(const CellSpec& cell, const S* params, const Tensor<S>& x,
                  Tensor<S>& h, Tensor<S>& c, Workspace<S>& ws,
                  CellCache<S>* cache) {
    if (x.c != cell.in_ch)
        throw ShapeError("cell input channels: got " + std::to_string(x.c) +
                         ", want " + std::to_string(cell.in_ch));
    if (h.h != x.h || h.w != x.w)
        throw ShapeError("cell state spatial dims do not match input");
    int n = x.n, hid = cell.hid, hh = x.h, www = x.w;
    size_t hw = static_cast<size_t>(hh) * www;
    size_t plane = static_cast<size_t>(hid) * hw;

    Tensor<S> zin(n, cell.in_ch + hid, hh, www);
    for (int s = 0; s < n; ++s) {
        std::copy(x.data() + static_cast<size_t>(s) * cell.in_ch * hw,
                  x.data() + static_cast<size_t>(s + 1) * cell.in_ch * hw,
                  zin.data() + static_cast<size_t>(s) * (cell.in_ch + hid) * hw);
        std::copy(h.data() + static_cast<size_t>(s) * plane,
                  h.data() + static_cast<size_t>(s + 1) * plane,
                  zin.data() + static_cast<size_t>(s) * (cell.in_ch + hid) * hw +
                      static_cast<size_t>(cell.in_ch) * hw);
    }

    Tensor<S> z;
    conv_forward(cell.gates, params, zin, z, ws);

    Tensor<S> ia(n, hid, hh, www), fa(n, hid, hh, www), oa(n, hid, hh, www),
        ga(n, hid, hh, www), cn(n, hid, hh, www), th(n, hid, hh, www);
    const S* peep = cell.peephole ? params + cell.peep_off : nullptr;

    for (int s = 0; s < n; ++s) {
        const S* zi = z.data() + static_cast<size_t>(s) * 4 * plane;
        const S* zf = zi + plane;
        const S* zo = zf + plane;
        const S* zg = zo + plane;
        const S* cp = c.data() + static_cast<size_t>(s) * plane;
        S* pia = ia.data() + static_cast<size_t>(s) * plane;
        S* pfa = fa.data() + static_cast<size_t>(s) * plane;
        S* poa = oa.data() + static_cast<size_t>(s) * plane;
        S* pga = ga.data() + static_cast<size_t>(s) * plane;
        S* pc = cn.data() + static_cast<size_t>(s) * plane;
        S* pth = th.data() + static_cast<size_t>(s) * plane;
        for (int ch = 0; ch < hid; ++ch) {
            S wi = peep ? peep[ch] : S(0);
            S wf = peep ? peep[hid + ch] : S(0);
            S wo = peep ? peep[2 * hid + ch] : S(0);
            for (size_t i = ch * hw; i < (ch + 1) * hw; ++i) {
                S iv = sigmoid(zi[i] + wi * cp[i]);
                S fv = sigmoid(zf[i] + wf * cp[i]);
                S gv = std::tanh(zg[i]);
                S cv = fv * cp[i] + iv * gv;
                S ov = sigmoid(zo[i] + wo * cv);
                pia[i] = iv;
                pfa[i] = fv;
                pga[i] = gv;
                pc[i] = cv;
                poa[i] = ov;
                pth[i] = std::tanh(cv);
            }
        }
    }

    if (cache) {
        cache->zin = std::move(zin);
        cache->ia = ia;
        cache->fa = fa;
        cache->oa = oa;
        cache->ga = ga;
        cache->c_prev = c;
        cache->c = cn;
        cache->tanh_c = th;
    }
    // h' = o * tanh(c')
    for (size_t i = 0; i < cn.size(); ++i) h.v[i] = oa.v[i] * th.v[i];
    c = std::move(cn);
}

// dh/dc are the totals arriving at this step's outputs; on return they
// hold the carries for step t-1. dx accumulates the input gradient.
template <typename S>
void cell_backward(const CellSpec& cell, const S* params, const CellCache<S>& cc,
                   Tensor<S>& dh, Tensor<S>& dc, S* grads, Tensor<S>& dx,
                   Workspace<S>& ws) {
    int n = cc.ia.n, hid = cell.hid, hh = cc.ia.h, www = cc.ia.w;
    size_t hw = static_cast<size_t>(hh) * www;
    size_t plane = static_cast<size_t>(hid) * hw;
    const S* peep = cell.peephole ? params + cell.peep_off : nullptr;
    S* dpeep = cell.peephole ? grads + cell.peep_off : nullptr;

    Tensor<S> dz(n, 4 * hid, hh, www);
    Tensor<S> dcp(n, hid, hh, www);

    for (int s = 0; s < n; ++s) {
        size_t off = static_cast<size_t>(s) * plane;
        const S* pia = cc.ia.data() + off;
        const S* pfa = cc.fa.data() + off;
        const S* poa = cc.oa.data() + off;
        const S* pga = cc.ga.data() + off;
        const S* pcp = cc.c_prev.data() + off;
        const S* pc = cc.c.data() + off;
        const S* pth = cc.tanh_c.data() + off;
        const S* pdh = dh.data() + off;
        const S* pdc_in = dc.data() + off;
        S* pdz = dz.data() + static_cast<size_t>(s) * 4 * plane;
        S* pdcp = dcp.data() + off;
        for (int ch = 0; ch < hid; ++ch) {
            S wi = peep ? peep[ch] : S(0);
            S wf = peep ? peep[hid + ch] : S(0);
            S wo = peep ? peep[2 * hid + ch] : S(0);
            S acc_i = S(0), acc_f = S(0), acc_o = S(0);
            for (size_t i = ch * hw; i < (ch + 1) * hw; ++i) {
                S dov = pdh[i] * pth[i];
                S dzo = dov * poa[i] * (S(1) - poa[i]);
                S dcv = pdc_in[i] + pdh[i] * poa[i] * (S(1) - pth[i] * pth[i]);
                if (peep) dcv += dzo * wo;
                S dfv = dcv * pcp[i];
                S div = dcv * pga[i];
                S dgv = dcv * pia[i];
                S dzi = div * pia[i] * (S(1) - pia[i]);
                S dzf = dfv * pfa[i] * (S(1) - pfa[i]);
                S dzg = dgv * (S(1) - pga[i] * pga[i]);
                S dprev = dcv * pfa[i];
                if (peep) {
                    dprev += dzi * wi + dzf * wf;
                    acc_i += dzi * pcp[i];
                    acc_f += dzf * pcp[i];
                    acc_o += dzo * pc[i];
                }
                pdz[i] = dzi;
                pdz[plane + i] = dzf;
                pdz[2 * plane + i] = dzo;
                pdz[3 * plane + i] = dzg;
                pdcp[i] = dprev;
            }
            if (peep) {
                dpeep[ch] += acc_i;
                dpeep[hid + ch] += acc_f;
                dpeep[2 * hid + ch] += acc_o;
            }
        }
    }

    Tensor<S> dzin(n, cell.in_ch + hid, hh, www);
    conv_backward(cell.gates, params, cc.zin, dz, grads, &dzin, ws);

    // split: first in_ch channels to dx, rest becomes dh carry
    for (int s = 0; s < n; ++s) {
        const S* src = dzin.data() + static_cast<size_t>(s) * (cell.in_ch + hid) * hw;
        S* pdx = dx.data() + static_cast<size_t>(s) * cell.in_ch * hw;
        for (size_t i = 0; i < static_cast<size_t>(cell.in_ch) * hw; ++i) pdx[i] += src[i];
        std::copy(src + static_cast<size_t>(cell.in_ch) * hw,
                  src + (static_cast<size_t>(cell.in_ch) + hid) * hw,
                  dh.data() + static_cast<size_t>(s) * plane);
    }
    dc = std::move(dcp);
}

// ---------- pooling / upsampling ----------

template <typename S>
void maxpool2(const Tensor<S>& x, Tensor<S>& y, std::vector<int32_t>& argmax) {
    y = Tensor<S>(x.n, x.c, x.h / 2, x.w / 2);
    argmax.resize(y.size());
    size_t idx = 0;
    for (int s = 0; s < x.n; ++s)
        for (int ch = 0; ch < x.c; ++ch)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx) {
                    S best = x.at(s, ch, 2 * yy, 2 * xx);
                    int by = 2 * yy, bx = 2 * xx;
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dxx = 0; dxx < 2; ++dxx) {
                            S v = x.at(s, ch, 2 * yy + dy, 2 * xx + dxx);
                            if (v > best) {
                                best = v;
                                by = 2 * yy + dy;
                                bx = 2 * xx + dxx;
                            }
                        }
                    y.v[idx] = best;
                    argmax[idx] =
                        static_cast<int32_t>((static_cast<size_t>(s) * x.c + ch) * x.h * x.w +
                                             static_cast<size_t>(by) * x.w + bx);
                    ++idx;
                }
}

template <typename S>
void maxpool2_backward(const Tensor<S>& dy, const std::vector<int32_t>& argmax,
                       Tensor<S>& dx) {
    for (size_t i = 0; i < dy.size(); ++i) dx.v[argmax[i]] += dy.v[i];
}

template <typename S>
void upsample2(const Tensor<S>& x, Tensor<S>& y) {
    y = Tensor<S>(x.n, x.c, x.h * 2, x.w * 2);
    for (int s = 0; s < x.n; ++s)
        for (int ch = 0; ch < x.c; ++ch)
            for (int yy = 0; yy < y.h; ++yy)
                for (int xx = 0; xx < y.w; ++xx)
                    y.at(s, ch, yy, xx) = x.at(s, ch, yy / 2, xx / 2);
}

template <typename S>
void upsample2_backward(const Tensor<S>& dy, Tensor<S>& dx) {
    for (int s = 0; s < dy.n; ++s)
        for (int ch = 0; ch < dy.c; ++ch)
            for (int yy = 0; yy < dy.h; ++yy)
                for (int xx = 0; xx < dy.w; ++xx)
                    dx.at(s, ch, yy / 2, xx / 2) += dy.at(s, ch, yy, xx);
}

}  // namespace echodfkd::net
