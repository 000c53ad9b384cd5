#include "echodfkd/data_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "echodfkd/csv.hpp"

namespace echodfkd {

std::string to_string(Split s) {
    switch (s) {
        case Split::TRAIN: return "TRAIN";
        case Split::VAL: return "VAL";
        case Split::TEST: return "TEST";
    }
    return "?";
}

Split split_from_string(const std::string& s) {
    if (s == "TRAIN") return Split::TRAIN;
    if (s == "VAL") return Split::VAL;
    if (s == "TEST") return Split::TEST;
    throw ManifestError("unknown split '" + s + "'");
}

std::string to_string(CorruptReason r) {
    switch (r) {
        case CorruptReason::VIDEO_CORRUPT: return "VIDEO_CORRUPT";
        case CorruptReason::LABEL_CORRUPT: return "LABEL_CORRUPT";
        case CorruptReason::ED_ES_TOO_CLOSE: return "ED_ES_TOO_CLOSE";
    }
    return "?";
}

CorruptReason corrupt_reason_from_string(const std::string& s) {
    if (s == "VIDEO_CORRUPT") return CorruptReason::VIDEO_CORRUPT;
    if (s == "LABEL_CORRUPT") return CorruptReason::LABEL_CORRUPT;
    if (s == "ED_ES_TOO_CLOSE") return CorruptReason::ED_ES_TOO_CLOSE;
    throw ManifestError("unknown corrupt reason '" + s + "'");
}

void VideoClip::validate() const {
    if (frames.n < 1) throw ShapeError("clip " + id + ": T must be >= 1");
    if (frames.h < 8 || frames.w < 8)
        throw ShapeError("clip " + id + ": H and W must be >= 8");
    if (frames.c != 1) throw ShapeError("clip " + id + ": expected 1 channel");
    if (fps <= 0.0) throw InputError("clip " + id + ": fps must be > 0");
    for (float x : frames.v)
        if (!(x >= 0.0f && x <= 1.0f))
            throw InputError("clip " + id + ": intensity outside [0,1]");
}

BinaryMaskSequence SoftMaskSequence::threshold(float tau) const {
    BinaryMaskSequence out;
    out.clip_id = clip_id;
    out.t = masks.n;
    out.h = masks.h;
    out.w = masks.w;
    out.masks.resize(masks.size());
    for (size_t i = 0; i < masks.size(); ++i)
        out.masks[i] = masks.v[i] > tau ? 1 : 0;
    return out;
}

const ManifestRecord* DatasetManifest::find(const std::string& clip_id) const {
    for (const auto& r : records)
        if (r.clip_id == clip_id) return &r;
    return nullptr;
}

std::vector<const ManifestRecord*> DatasetManifest::split_records(Split s) const {
    std::vector<const ManifestRecord*> out;
    for (const auto& r : records)
        if (r.split == s) out.push_back(&r);
    return out;
}

void DatasetManifest::validate() const {
    std::set<std::string> seen;
    for (size_t i = 0; i < records.size(); ++i) {
        if (!seen.insert(records[i].clip_id).second)
            throw ManifestError("duplicate clip_id '" + records[i].clip_id +
                                "' at row " + std::to_string(i));
    }
}

// ---- tracing rasterization ----

int64_t mask_area(const BinaryMask& mask) {
    int64_t a = 0;
    for (uint8_t p : mask.px) a += p;
    return a;
}

int64_t mask_area(const BinaryMaskSequence& masks, int frame) {
    int64_t a = 0;
    size_t base = static_cast<size_t>(frame) * masks.h * masks.w;
    for (size_t i = 0; i < static_cast<size_t>(masks.h) * masks.w; ++i)
        a += masks.masks[base + i];
    return a;
}

namespace {

struct Pt {
    double x, y;
};

// Endpoints of the crossing chords ordered along the principal axis on
// each side, closed through the axis endpoints.
std::vector<Pt> tracing_polygon(const PolygonalTracing& tr) {
    const Chord& axis = tr.chords[0];
    Pt a{axis.x1, axis.y1}, b{axis.x2, axis.y2};
    double dx = b.x - a.x, dy = b.y - a.y;
    double len2 = dx * dx + dy * dy;
    if (len2 == 0.0) throw DegenerateTracing("principal axis has zero length");

    struct Proj {
        double t;
        Pt p;
    };
    std::vector<Proj> left, right;
    for (size_t i = 1; i < tr.chords.size(); ++i) {
        const Chord& ch = tr.chords[i];
        for (Pt p : {Pt{ch.x1, ch.y1}, Pt{ch.x2, ch.y2}}) {
            double cross = dx * (p.y - a.y) - dy * (p.x - a.x);
            double t = (dx * (p.x - a.x) + dy * (p.y - a.y)) / len2;
            if (cross >= 0.0)
                left.push_back({t, p});
            else
                right.push_back({t, p});
        }
    }
    auto by_t = [](const Proj& u, const Proj& v) { return u.t < v.t; };
    std::sort(left.begin(), left.end(), by_t);
    std::sort(right.begin(), right.end(), by_t);

    std::vector<Pt> poly;
    poly.push_back(a);
    for (const auto& p : left) poly.push_back(p.p);
    poly.push_back(b);
    for (auto it = right.rbegin(); it != right.rend(); ++it) poly.push_back(it->p);
    return poly;
}

}  // namespace

BinaryMask rasterize_tracing(const PolygonalTracing& tr, int height, int width) {
    if (tr.chords.size() < 2)
        throw DegenerateTracing("need at least 2 chords, got " +
                                std::to_string(tr.chords.size()));
    for (const Chord& ch : tr.chords) {
        for (double x : {ch.x1, ch.x2})
            if (x < 0.0 || x > width)
                throw InvalidTracing("x coordinate out of bounds");
        for (double y : {ch.y1, ch.y2})
            if (y < 0.0 || y > height)
                throw InvalidTracing("y coordinate out of bounds");
    }

    std::vector<Pt> poly = tracing_polygon(tr);
    BinaryMask mask;
    mask.h = height;
    mask.w = width;
    mask.px.assign(static_cast<size_t>(height) * width, 0);

    std::vector<double> xs;
    for (int y = 0; y < height; ++y) {
        double yc = y + 0.5;
        xs.clear();
        for (size_t i = 0; i < poly.size(); ++i) {
            const Pt& p = poly[i];
            const Pt& q = poly[(i + 1) % poly.size()];
            if ((p.y <= yc) == (q.y <= yc)) continue;
            xs.push_back(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
        }
        std::sort(xs.begin(), xs.end());
        for (size_t k = 0; k + 1 < xs.size(); k += 2) {
            int x0 = static_cast<int>(std::ceil(xs[k] - 0.5));
            int x1 = static_cast<int>(std::ceil(xs[k + 1] - 0.5));  // exclusive
            x0 = std::max(x0, 0);
            x1 = std::min(x1, width);
            for (int x = x0; x < x1; ++x) mask.at(y, x) = 1;
        }
    }
    return mask;
}

// ---- morphology ----

namespace {

// separable running max/min over a (2r+1) square window
template <typename Cmp>
void window_pass(const uint8_t* in, uint8_t* out, int h, int w, int radius,
                 uint8_t init, Cmp cmp) {
    std::vector<uint8_t> tmp(static_cast<size_t>(h) * w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t v = init;
            for (int dx = -radius; dx <= radius; ++dx) {
                int xx = x + dx;
                if (xx < 0 || xx >= w) continue;
                uint8_t u = in[static_cast<size_t>(y) * w + xx];
                if (cmp(u, v)) v = u;
            }
            tmp[static_cast<size_t>(y) * w + x] = v;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            uint8_t v = init;
            for (int dy = -radius; dy <= radius; ++dy) {
                int yy = y + dy;
                if (yy < 0 || yy >= h) continue;
                uint8_t u = tmp[static_cast<size_t>(yy) * w + x];
                if (cmp(u, v)) v = u;
            }
            out[static_cast<size_t>(y) * w + x] = v;
        }
}

}  // namespace

void dilate_chebyshev(const uint8_t* in, uint8_t* out, int h, int w, int radius) {
    window_pass(in, out, h, w, radius, 0, std::greater<uint8_t>());
}

void erode_chebyshev(const uint8_t* in, uint8_t* out, int h, int w, int radius) {
    window_pass(in, out, h, w, radius, 1, std::less<uint8_t>());
}

void largest_component(const uint8_t* in, uint8_t* out, int h, int w) {
    const size_t n = static_cast<size_t>(h) * w;
    std::vector<int32_t> label(n, -1);
    int best_label = -1;
    size_t best_size = 0;
    int next = 0;
    std::vector<size_t> stack;
    for (size_t s = 0; s < n; ++s) {
        if (!in[s] || label[s] >= 0) continue;
        int cur = next++;
        size_t sz = 0;
        stack.assign(1, s);
        label[s] = cur;
        while (!stack.empty()) {
            size_t p = stack.back();
            stack.pop_back();
            ++sz;
            int y = static_cast<int>(p) / w, x = static_cast<int>(p) % w;
            const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                int yy = y + dy[k], xx = x + dx[k];
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                size_t q = static_cast<size_t>(yy) * w + xx;
                if (in[q] && label[q] < 0) {
                    label[q] = cur;
                    stack.push_back(q);
                }
            }
        }
        if (sz > best_size) {
            best_size = sz;
            best_label = cur;
        }
    }
    for (size_t s = 0; s < n; ++s)
        out[s] = (in[s] && label[s] == best_label) ? 1 : 0;
}

// ---- manifest io ----

namespace {

std::filesystem::path with_suffix(const std::filesystem::path& stem,
                                  const std::string& suffix) {
    std::filesystem::path p = stem;
    p += suffix;
    return p;
}

}  // namespace

void save_manifest(const DatasetManifest& manifest,
                   const std::filesystem::path& stem) {
    manifest.validate();
    std::string rec = "clip_id,split,fps,num_frames,ed_frame,es_frame,ef\n";
    bool any_tracings = false;
    for (const auto& r : manifest.records) {
        rec += r.clip_id + ',' + to_string(r.split) + ',' + fmt_float(r.fps) +
               ',' + std::to_string(r.num_frames) + ',';
        if (r.labels) {
            rec += std::to_string(r.labels->ed_frame) + ',' +
                   std::to_string(r.labels->es_frame) + ',' +
                   fmt_float(r.labels->ef);
            if (!r.labels->tracings.empty()) any_tracings = true;
        } else {
            rec += ",,";
        }
        rec += '\n';
    }
    atomic_write(with_suffix(stem, ".csv"), rec);

    std::string cor = "clip_id,reason\n";
    for (const auto& [id, reason] : manifest.corrupted)
        cor += id + ',' + to_string(reason) + '\n';
    atomic_write(with_suffix(stem, ".corrupted.csv"), cor);

    if (any_tracings) {
        std::string trc = "clip_id,frame_index,chord_index,x1,y1,x2,y2\n";
        for (const auto& r : manifest.records) {
            if (!r.labels) continue;
            for (const auto& tr : r.labels->tracings)
                for (size_t ci = 0; ci < tr.chords.size(); ++ci) {
                    const Chord& ch = tr.chords[ci];
                    trc += r.clip_id + ',' + std::to_string(tr.frame_index) +
                           ',' + std::to_string(ci) + ',' + fmt_float(ch.x1) +
                           ',' + fmt_float(ch.y1) + ',' + fmt_float(ch.x2) +
                           ',' + fmt_float(ch.y2) + '\n';
                }
        }
        atomic_write(with_suffix(stem, ".tracings.csv"), trc);
    }
}

DatasetManifest load_manifest(const std::filesystem::path& stem) {
    DatasetManifest m;
    CsvTable t = read_csv(with_suffix(stem, ".csv"));
    int c_id = t.require_col("clip_id"), c_split = t.require_col("split");
    int c_fps = t.require_col("fps"), c_nf = t.require_col("num_frames");
    int c_ed = t.require_col("ed_frame"), c_es = t.require_col("es_frame");
    int c_ef = t.require_col("ef");
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        try {
            ManifestRecord r;
            r.clip_id = row.at(c_id);
            r.split = split_from_string(row.at(c_split));
            r.fps = std::stod(row.at(c_fps));
            r.num_frames = std::stoi(row.at(c_nf));
            if (!row.at(c_ed).empty()) {
                ClipLabels lab;
                lab.ed_frame = std::stoi(row.at(c_ed));
                lab.es_frame = std::stoi(row.at(c_es));
                lab.ef = std::stod(row.at(c_ef));
                r.labels = lab;
            }
            m.records.push_back(std::move(r));
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            throw ManifestError("row " + std::to_string(i + 1) + ": " + e.what());
        }
    }

    auto cor_path = with_suffix(stem, ".corrupted.csv");
    if (std::filesystem::exists(cor_path)) {
        CsvTable ct = read_csv(cor_path);
        int cc_id = ct.require_col("clip_id"), cc_r = ct.require_col("reason");
        for (const auto& row : ct.rows)
            m.corrupted[row.at(cc_id)] = corrupt_reason_from_string(row.at(cc_r));
    }

    auto trc_path = with_suffix(stem, ".tracings.csv");
    if (std::filesystem::exists(trc_path)) {
        CsvTable tt = read_csv(trc_path);
        int tc_id = tt.require_col("clip_id"), tc_f = tt.require_col("frame_index");
        int tc_x1 = tt.require_col("x1"), tc_y1 = tt.require_col("y1");
        int tc_x2 = tt.require_col("x2"), tc_y2 = tt.require_col("y2");
        for (const auto& row : tt.rows) {
            auto* rec = const_cast<ManifestRecord*>(m.find(row.at(tc_id)));
            if (!rec || !rec->labels)
                throw ManifestError("tracing for unknown/unlabeled clip " +
                                    row.at(tc_id));
            int fi = std::stoi(row.at(tc_f));
            auto& trs = rec->labels->tracings;
            auto it = std::find_if(trs.begin(), trs.end(),
                                   [&](const PolygonalTracing& p) {
                                       return p.frame_index == fi;
                                   });
            if (it == trs.end()) {
                trs.push_back(PolygonalTracing{fi, {}});
                it = trs.end() - 1;
            }
            it->chords.push_back(Chord{std::stod(row.at(tc_x1)),
                                       std::stod(row.at(tc_y1)),
                                       std::stod(row.at(tc_x2)),
                                       std::stod(row.at(tc_y2))});
        }
    }

    m.validate();
    return m;
}

}  // namespace echodfkd
