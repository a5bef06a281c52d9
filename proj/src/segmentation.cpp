#include "htr/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace htr::segmentation {

namespace {

constexpr double kEps = 1e-9;

Segment make_segment(std::vector<Pixel> mask) {
    Segment s;
    std::sort(mask.begin(), mask.end());
    long long sum_x = 0;
    s.left = mask.front().x;
    s.right = mask.front().x + 1;
    for (const auto& p : mask) {
        sum_x += p.x;
        s.left = std::min(s.left, p.x);
        s.right = std::max(s.right, p.x + 1);
    }
    s.centroid_x = static_cast<int>(std::floor(static_cast<double>(sum_x) / static_cast<double>(mask.size())));
    s.mask = std::move(mask);
    return s;
}

void order_and_number(std::vector<Segment>& segs) {
    std::sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) {
        if (a.centroid_x != b.centroid_x) return a.centroid_x < b.centroid_x;
        return a.left < b.left;
    });
    for (std::size_t i = 0; i < segs.size(); ++i) segs[i].id = static_cast<int>(i);
}

// Lattice vertices need strictly increasing centroids, so coinciding segments
// are fused.
void merge_coincident(std::vector<Segment>& segs) {
    order_and_number(segs);
    bool changed = true;
    while (changed && segs.size() > 1) {
        changed = false;
        for (std::size_t i = 0; i + 1 < segs.size(); ++i) {
            if (segs[i].centroid_x != segs[i + 1].centroid_x) continue;
            auto mask = std::move(segs[i].mask);
            mask.insert(mask.end(), segs[i + 1].mask.begin(), segs[i + 1].mask.end());
            segs[i] = make_segment(std::move(mask));
            segs.erase(segs.begin() + static_cast<std::ptrdiff_t>(i) + 1);
            order_and_number(segs);
            changed = true;
            break;
        }
    }
}

template <typename Cmp>
std::vector<int> plateau_extrema(std::span<const double> v, Cmp beyond) {
    std::vector<int> out;
    const int n = static_cast<int>(v.size());
    int a = 0;
    while (a < n) {
        int b = a;
        while (b + 1 < n && std::abs(v[static_cast<std::size_t>(b + 1)] - v[static_cast<std::size_t>(a)]) <= kEps) ++b;
        if (a > 0 && b < n - 1 && beyond(v[static_cast<std::size_t>(a - 1)], v[static_cast<std::size_t>(a)]) &&
            beyond(v[static_cast<std::size_t>(b + 1)], v[static_cast<std::size_t>(a)])) {
            out.push_back(a);
        }
        a = b + 1;
    }
    return out;
}

struct CutLine {
    double top_x, top_y, bottom_x, bottom_y;

    double x_at(double y) const {
        if (y <= top_y) return top_x;
        if (y >= bottom_y) return bottom_x;
        return top_x + (bottom_x - top_x) * (y - top_y) / (bottom_y - top_y);
    }
    bool places_left(const Pixel& p) const { return p.x <= x_at(p.y) + kEps; }
    double mid_x() const { return 0.5 * (top_x + bottom_x); }
};

std::vector<Segment> split_component(const std::vector<Pixel>& comp) {
    const BinaryImage local = BinaryImage::from_pixels(comp);
    int minx = comp.front().x, miny = comp.front().y;
    for (const auto& p : comp) {
        minx = std::min(minx, p.x);
        miny = std::min(miny, p.y);
    }
    const Contour c = contours(local);

    // Valleys of the upper contour are maxima of its row index; peaks of the
    // lower contour are minima of its row index.
    const auto valleys = plateau_maxima(c.upper);
    const auto peaks = plateau_minima(c.lower);

    std::vector<CutLine> cuts;
    if (!peaks.empty()) {
        for (int u : valleys) {
            int best = peaks.front();
            for (int l : peaks) {
                if (std::abs(l - u) < std::abs(best - u)) best = l;
            }
            double ux = u + c.first_column + minx, uy = c.upper[static_cast<std::size_t>(u)] + miny;
            double lx = best + c.first_column + minx, ly = c.lower[static_cast<std::size_t>(best)] + miny;
            if (uy <= ly) {
                cuts.push_back({ux, uy, lx, ly});
            } else {
                cuts.push_back({lx, ly, ux, uy});
            }
        }
    }
    std::sort(cuts.begin(), cuts.end(), [](const CutLine& a, const CutLine& b) {
        if (a.mid_x() != b.mid_x()) return a.mid_x() < b.mid_x();
        return a.top_x < b.top_x;
    });

    std::vector<std::vector<Pixel>> regions(cuts.size() + 1);
    for (const auto& p : comp) {
        std::size_t r = cuts.size();
        for (std::size_t k = 0; k < cuts.size(); ++k) {
            if (cuts[k].places_left(p)) {
                r = k;
                break;
            }
        }
        regions[r].push_back(p);
    }
    std::vector<Segment> out;
    for (auto& r : regions)
        if (!r.empty()) out.push_back(make_segment(std::move(r)));
    return out;
}

}  // namespace

Method parse_method(std::string_view name) {
    if (name == "over") return Method::over;
    if (name == "polygonal") return Method::polygonal;
    throw Error("unknown segmentation method: " + std::string(name));
}

std::string_view method_name(Method m) { return m == Method::over ? "over" : "polygonal"; }

InkProfile ink_profile(const BinaryImage& word) {
    if (word.empty() || word.ink_count() == 0) throw Error("ink_profile: empty word");
    InkProfile p;
    p.counts.assign(static_cast<std::size_t>(word.width()), 0);
    for (int y = 0; y < word.height(); ++y)
        for (int x = 0; x < word.width(); ++x)
            if (word.at(x, y)) ++p.counts[static_cast<std::size_t>(x)];
    return p;
}

std::vector<int> plateau_minima(std::span<const double> values) {
    return plateau_extrema(values, [](double neighbor, double v) { return neighbor > v + kEps; });
}

std::vector<int> plateau_maxima(std::span<const double> values) {
    return plateau_extrema(values, [](double neighbor, double v) { return neighbor < v - kEps; });
}

std::vector<Segment> over_segment(const BinaryImage& word) {
    const auto profile = ink_profile(word);
    std::vector<double> values(profile.counts.begin(), profile.counts.end());
    std::vector<int> bounds = plateau_minima(values);
    bounds.insert(bounds.begin(), 0);
    bounds.push_back(word.width());

    std::vector<Segment> segs;
    for (std::size_t i = 0; i + 1 < bounds.size(); ++i) {
        std::vector<Pixel> mask;
        for (int y = 0; y < word.height(); ++y)
            for (int x = bounds[i]; x < bounds[i + 1]; ++x)
                if (word.at(x, y)) mask.push_back({x, y});
        if (mask.empty()) continue;
        segs.push_back(make_segment(std::move(mask)));
    }
    order_and_number(segs);
    return segs;
}

Contour contours(const BinaryImage& component) {
    if (component.empty() || component.ink_count() == 0) throw Error("contours: empty component");
    const Box b = ink_bounds(component);
    const auto n = static_cast<std::size_t>(b.width());
    std::vector<double> top(n), bottom(n);
    for (int x = b.left; x < b.right; ++x) {
        int t = -1, u = -1;
        for (int y = 0; y < component.height(); ++y) {
            if (!component.at(x, y)) continue;
            if (t < 0) t = y;
            u = y;
        }
        if (t < 0) throw Error("contours: component has an empty column");
        top[static_cast<std::size_t>(x - b.left)] = t;
        bottom[static_cast<std::size_t>(x - b.left)] = u;
    }
    auto smooth = [n](const std::vector<double>& v) {
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t lo = i == 0 ? 0 : i - 1;
            const std::size_t hi = std::min(n - 1, i + 1);
            double s = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) s += v[k];
            out[i] = s / static_cast<double>(hi - lo + 1);
        }
        return out;
    };
    return Contour{b.left, smooth(top), smooth(bottom)};
}

std::vector<Segment> polygonal_segment(const BinaryImage& word) {
    if (word.empty() || word.ink_count() == 0) throw Error("polygonal_segment: empty word");
    std::vector<Segment> segs;
    for (const auto& comp : connected_components(word)) {
        for (auto& s : split_component(comp)) segs.push_back(std::move(s));
    }
    merge_coincident(segs);
    return segs;
}

std::vector<Segment> segment(const BinaryImage& word, Method method) {
    return method == Method::over ? over_segment(word) : polygonal_segment(word);
}

BinaryImage group_image(std::span<const Segment> segments) {
    std::vector<Pixel> all;
    for (const auto& s : segments) all.insert(all.end(), s.mask.begin(), s.mask.end());
    if (all.empty()) throw Error("group_image: empty union");
    return BinaryImage::from_pixels(all);
}

}  // namespace htr::segmentation
