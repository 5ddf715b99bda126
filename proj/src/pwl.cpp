#include "cvar/pwl.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

#include "cvar/tolerances.hpp"

namespace cvar {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_domain_arg(double y, double L) {
    if (!(y >= -tol::rel(1e-12, L) && y <= L + tol::rel(1e-12, L)))
        throw std::domain_error("pwl: argument " + std::to_string(y) +
                                " outside domain [0, " + std::to_string(L) + "]");
}

}  // namespace

PwlConcave PwlConcave::make(double value_at_zero, std::vector<Segment> segments,
                            double domain_length) {
    if (!(domain_length > 0) || !std::isfinite(domain_length))
        throw std::invalid_argument("pwl: domain length must be positive");
    if (segments.empty())
        throw std::invalid_argument("pwl: at least one segment required");

    for (auto& s : segments) {
        if (!std::isfinite(s.slope) || !std::isfinite(s.length))
            throw std::invalid_argument("pwl: non-finite segment");
        if (s.slope < 0) {
            if (s.slope < -tol::rel(1e-12, s.slope))
                throw std::invalid_argument("pwl: negative slope " + std::to_string(s.slope));
            s.slope = 0;
        }
        if (s.length < 0)
            throw std::invalid_argument("pwl: negative segment length");
    }

    // Fold dust-length segments into their left neighbor (right for the first).
    const double drop = tol::length_drop_rel * domain_length;
    std::vector<Segment> kept;
    kept.reserve(segments.size());
    double pending = 0;  // dust collected before the first kept segment
    for (const auto& s : segments) {
        if (s.length <= drop) {
            if (!kept.empty())
                kept.back().length += s.length;
            else
                pending += s.length;
        } else {
            kept.push_back(s);
        }
    }
    if (kept.empty())
        throw std::invalid_argument("pwl: all segments have zero length");
    kept.front().length += pending;

    // Coalesce runs of near-equal slopes; the first slope of a run represents it.
    std::vector<Segment> out;
    out.reserve(kept.size());
    for (const auto& s : kept) {
        if (!out.empty() && tol::slopes_equal(out.back().slope, s.slope))
            out.back().length += s.length;
        else
            out.push_back(s);
    }
    for (std::size_t i = 1; i < out.size(); ++i)
        if (!(out[i - 1].slope > out[i].slope))
            throw std::invalid_argument("pwl: slopes must be strictly decreasing");

    double sum = 0;
    for (const auto& s : out) sum += s.length;
    if (std::fabs(sum - domain_length) > tol::rel(tol::length_sum_rel, domain_length))
        throw std::invalid_argument("pwl: segment lengths sum to " + std::to_string(sum) +
                                    ", expected " + std::to_string(domain_length));
    // Absorb rounding residue so breakpoints end exactly at L.
    double prefix = 0;
    for (std::size_t i = 0; i + 1 < out.size(); ++i) prefix += out[i].length;
    out.back().length = domain_length - prefix;
    if (out.back().length <= 0)
        throw std::invalid_argument("pwl: degenerate final segment");

    PwlConcave f;
    f.value_at_zero_ = value_at_zero;
    f.domain_length_ = domain_length;
    f.segments_ = std::move(out);
    f.validate();
    return f;
}

PwlConcave PwlConcave::affine(double value_at_zero, double slope, double domain_length) {
    return make(value_at_zero, {Segment{slope, domain_length}}, domain_length);
}

void PwlConcave::validate() const {
    if (!(domain_length_ > 0)) throw std::logic_error("pwl: empty domain");
    if (segments_.empty()) throw std::logic_error("pwl: no segments");
    if (!std::isfinite(value_at_zero_)) throw std::logic_error("pwl: non-finite value at 0");
    double sum = 0;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const auto& s = segments_[i];
        if (!(s.length > 0)) throw std::logic_error("pwl: non-positive segment length");
        if (s.slope < 0) throw std::logic_error("pwl: negative slope");
        if (i > 0 && !(segments_[i - 1].slope > s.slope))
            throw std::logic_error("pwl: slopes not strictly decreasing");
        sum += s.length;
    }
    if (std::fabs(sum - domain_length_) > tol::rel(tol::length_sum_rel, domain_length_))
        throw std::logic_error("pwl: segment lengths do not sum to the domain length");
}

std::vector<double> PwlConcave::breakpoints() const {
    std::vector<double> ys;
    ys.reserve(segments_.size() + 1);
    ys.push_back(0);
    double pos = 0;
    for (const auto& s : segments_) {
        pos += s.length;
        ys.push_back(pos);
    }
    ys.back() = domain_length_;
    return ys;
}

double PwlConcave::eval(double y) const {
    check_domain_arg(y, domain_length_);
    y = std::clamp(y, 0.0, domain_length_);
    double acc = value_at_zero_;
    double pos = 0;
    for (const auto& s : segments_) {
        const double next = pos + s.length;
        if (y >= next) {
            acc += s.slope * s.length;
            pos = next;
        } else {
            acc += s.slope * (y - pos);
            return acc;
        }
    }
    return acc;
}

double PwlConcave::right_deriv(double y) const {
    check_domain_arg(y, domain_length_);
    double pos = 0;
    for (const auto& s : segments_) {
        pos += s.length;
        if (y < pos) return s.slope;
    }
    return 0;  // right edge convention
}

double PwlConcave::left_deriv(double y) const {
    check_domain_arg(y, domain_length_);
    if (y <= 0) return kInf;  // left edge convention
    double pos = 0;
    for (const auto& s : segments_) {
        pos += s.length;
        if (y <= pos) return s.slope;
    }
    return segments_.back().slope;
}

SuperdiffResult PwlConcave::invert_superdifferential(double u) const {
    if (u < 0) u = 0;

    // A slope within tolerance of u matches its whole piece.
    int best = -1;
    double best_gap = kInf;
    double pos = 0;
    double best_lo = 0, best_hi = 0;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const double gap = std::fabs(u - segments_[i].slope);
        if (gap <= tol::rel(tol::deriv_rel, u, segments_[i].slope) && gap < best_gap) {
            best = static_cast<int>(i);
            best_gap = gap;
            best_lo = pos;
            best_hi = pos + segments_[i].length;
        }
        pos += segments_[i].length;
    }
    if (best >= 0) {
        SuperdiffResult r{};
        r.unique = false;
        r.lo = best_lo;
        r.hi = (static_cast<std::size_t>(best) + 1 == segments_.size()) ? domain_length_
                                                                        : best_hi;
        r.slope = segments_[static_cast<std::size_t>(best)].slope;
        return r;
    }

    SuperdiffResult r{};
    r.unique = true;
    if (u > segments_.front().slope) {
        r.point = 0;  // superdifferential at 0 reaches +infinity
        return r;
    }
    if (u < segments_.back().slope) {
        r.point = domain_length_;  // superdifferential at L reaches down to 0
        return r;
    }
    pos = 0;
    for (std::size_t i = 0; i + 1 < segments_.size(); ++i) {
        pos += segments_[i].length;
        if (u < segments_[i].slope && u > segments_[i + 1].slope) {
            r.point = pos;
            return r;
        }
    }
    throw std::logic_error("pwl: superdifferential inversion found no match");
}

PwlConcave PwlConcave::simplified(double slope_tol) const {
    if (!(slope_tol > 0)) return *this;
    std::vector<Segment> out;
    out.reserve(segments_.size());
    for (const auto& s : segments_) {
        if (!out.empty() && std::fabs(out.back().slope - s.slope) <= slope_tol) {
            const double len = out.back().length + s.length;
            out.back().slope =
                (out.back().slope * out.back().length + s.slope * s.length) / len;
            out.back().length = len;
        } else {
            out.push_back(s);
        }
    }
    return make(value_at_zero_, std::move(out), domain_length_);
}

PwlConcave transform_successor(const PwlConcave& f, double mean_cost, double cvar_cost,
                               double beta) {
    if (!(beta > 0)) throw std::invalid_argument("transform_successor: beta must be > 0");
    if (mean_cost < 0 || cvar_cost < 0)
        throw std::invalid_argument("transform_successor: costs must be non-negative");
    std::vector<Segment> segs = f.segments();
    for (auto& s : segs) s.slope = cvar_cost + beta * s.slope;
    return PwlConcave::make(mean_cost + beta * f.value_at_zero(), std::move(segs),
                            f.domain_length());
}

PwlConcave scale_argument(const PwlConcave& f, double p) {
    if (!(p > 0)) throw std::invalid_argument("scale_argument: p must be > 0");
    std::vector<Segment> segs = f.segments();
    for (auto& s : segs) s.length *= p;
    return PwlConcave::make(p * f.value_at_zero(), std::move(segs), p * f.domain_length());
}

PwlConcave merge_sources(const std::vector<PwlConcave>& parts) {
    if (parts.empty()) throw std::invalid_argument("merge_sources: no parts");
    double v0 = 0;
    double domain = 0;
    std::vector<Segment> all;
    for (const auto& part : parts) {
        v0 += part.value_at_zero();
        domain += part.domain_length();
        all.insert(all.end(), part.segments().begin(), part.segments().end());
    }
    std::stable_sort(all.begin(), all.end(),
                     [](const Segment& a, const Segment& b) { return a.slope > b.slope; });
    return PwlConcave::make(v0, std::move(all), domain);
}

PwlConcave min_envelope(const std::vector<PwlConcave>& parts) {
    if (parts.empty()) throw std::invalid_argument("min_envelope: no parts");
    const double L = parts.front().domain_length();
    for (const auto& part : parts)
        if (std::fabs(part.domain_length() - L) > tol::rel(tol::length_sum_rel, L))
            throw std::invalid_argument("min_envelope: mismatched domains");
    if (parts.size() == 1) return parts.front();

    // Candidate cell boundaries: every part's breakpoints plus every pairwise
    // crossing inside a cell of the joint breakpoint grid.
    std::vector<double> grid;
    for (const auto& part : parts)
        for (double y : part.breakpoints()) grid.push_back(std::clamp(y, 0.0, L));
    grid.push_back(0);
    grid.push_back(L);
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end(),
                           [&](double a, double b) { return b - a <= 1e-15 * std::max(1.0, L); }),
               grid.end());

    std::vector<double> cuts = grid;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        for (std::size_t j = i + 1; j < parts.size(); ++j) {
            for (std::size_t k = 0; k + 1 < grid.size(); ++k) {
                const double a = grid[k], b = grid[k + 1];
                const double fa = parts[i].eval(a) - parts[j].eval(a);
                const double fb = parts[i].eval(b) - parts[j].eval(b);
                if ((fa < 0 && fb > 0) || (fa > 0 && fb < 0)) {
                    const double t = fa / (fa - fb);
                    const double y = a + t * (b - a);
                    if (y > a && y < b) cuts.push_back(y);
                }
            }
        }
    }
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end(),
                           [&](double a, double b) { return b - a <= 1e-15 * std::max(1.0, L); }),
               cuts.end());
    if (cuts.front() != 0.0) cuts.front() = 0.0;
    if (cuts.back() != L) cuts.back() = L;

    double v0 = parts.front().eval(0);
    for (const auto& part : parts) v0 = std::min(v0, part.eval(0));

    std::vector<Segment> segs;
    segs.reserve(cuts.size());
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double mid = 0.5 * (cuts[k] + cuts[k + 1]);
        std::size_t arg = 0;
        double best = parts[0].eval(mid);
        for (std::size_t i = 1; i < parts.size(); ++i) {
            const double v = parts[i].eval(mid);
            if (v < best) {
                best = v;
                arg = i;
            }
        }
        segs.push_back(Segment{parts[arg].right_deriv(mid), cuts[k + 1] - cuts[k]});
    }
    return PwlConcave::make(v0, std::move(segs), L);
}

double sup_distance(const PwlConcave& f, const PwlConcave& g) {
    const double L = f.domain_length();
    if (std::fabs(g.domain_length() - L) > tol::rel(tol::length_sum_rel, L))
        throw std::invalid_argument("sup_distance: mismatched domains");
    std::vector<double> ys = f.breakpoints();
    const std::vector<double> gb = g.breakpoints();
    ys.insert(ys.end(), gb.begin(), gb.end());
    double best = 0;
    for (double y : ys) {
        const double z = std::clamp(y, 0.0, L);
        best = std::max(best, std::fabs(f.eval(z) - g.eval(z)));
    }
    return best;
}

std::string to_csv(const PwlConcave& f) {
    std::ostringstream os;
    os << std::setprecision(12);
    os << "y,value,right_slope\n";
    for (double y : f.breakpoints())
        os << y << ',' << f.eval(y) << ',' << f.right_deriv(y) << '\n';
    return os.str();
}

}  // namespace cvar
