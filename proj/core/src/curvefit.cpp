// Outline curve fitting for pseudo-healthy hole filling (fill_holes_curvefit).

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <optional>

#include <Eigen/Dense>

#include "kneemorph/fcl.hpp"
#include "kneemorph/parcellation.hpp"

namespace kneemorph {
namespace {

constexpr double kDipTolerance = 1.5;  // in bin widths
constexpr double kFillMargin = 0.5;    // in bin widths
constexpr int kMaxRefits = 10;
constexpr int kDefaultTibialOrder = 3;
constexpr int kDefaultFemoralOrder = 4;

using Basis = std::function<Eigen::VectorXd(double)>;

Basis polynomial_basis(int order) {
    return [order](double t) {
        Eigen::VectorXd b(order + 1);
        double p = 1.0;
        for (int i = 0; i <= order; ++i) {
            b[i] = p;
            p *= t;
        }
        return b;
    };
}

/// Constant plus cos/sin pairs; `order` counts the non-constant terms.
Basis trigonometric_basis(int order) {
    const int pairs = std::max(1, order / 2);
    return [pairs](double t) {
        Eigen::VectorXd b(1 + 2 * pairs);
        b[0] = 1.0;
        for (int k = 1; k <= pairs; ++k) {
            const double w = k * std::numbers::pi / 2.0 * t;
            b[2 * k - 1] = std::cos(w);
            b[2 * k] = std::sin(w);
        }
        return b;
    };
}

/// Planar coordinates of surface vertices: `along` and `across` axes in mm,
/// plus whether the vertex is near enough to the fitted sheet to be filled.
struct Chart {
    std::function<std::optional<Eigen::Vector2d>(const Vec3&)> map;
};

/// Extreme `across` value per `along` bin on one side of the outline.
class Profile {
public:
    Profile(const std::vector<Eigen::Vector2d>& pts, int along, double sign, double h, Basis basis, int nparams)
        : along_(along), sign_(sign), h_(h), basis_(std::move(basis)), nparams_(nparams) {
        lo_ = std::numeric_limits<double>::max();
        double hi = -lo_;
        for (const auto& p : pts) {
            lo_ = std::min(lo_, p[along]);
            hi = std::max(hi, p[along]);
        }
        mid_ = 0.5 * (lo_ + hi);
        half_ = std::max(0.5 * (hi - lo_), h_);
        nbins_ = static_cast<int>(std::lround((hi - lo_) / h_)) + 1;
        ext_.assign(static_cast<std::size_t>(nbins_), 0.0);
        pos_.assign(static_cast<std::size_t>(nbins_), 0.0);
        occupied_.assign(static_cast<std::size_t>(nbins_), false);
        for (const auto& p : pts) {
            const int b = bin(p[along]);
            const double s = sign_ * p[1 - along];
            auto ub = static_cast<std::size_t>(b);
            if (!occupied_[ub] || s > ext_[ub] || (s == ext_[ub] && p[along] < pos_[ub])) {
                ext_[ub] = s;
                pos_[ub] = p[along];
                occupied_[ub] = true;
            }
        }
    }

    /// Robust one-sided fit: bins dipping inside the fit by more than the
    /// tolerance are dropped and the fit repeated. False when too few bins
    /// remain for the basis.
    bool fit() {
        std::vector<bool> use = occupied_;
        for (int it = 0; it < kMaxRefits; ++it) {
            const int n = static_cast<int>(std::count(use.begin(), use.end(), true));
            if (n < nparams_ + 2) return false;
            Eigen::MatrixXd a(n, nparams_);
            Eigen::VectorXd y(n);
            int r = 0;
            for (int b = 0; b < nbins_; ++b) {
                if (!use[static_cast<std::size_t>(b)]) continue;
                a.row(r) = basis_(normalized(pos_[static_cast<std::size_t>(b)])).transpose();
                y[r] = ext_[static_cast<std::size_t>(b)];
                ++r;
            }
            coef_ = a.colPivHouseholderQr().solve(y);
            std::vector<bool> next = occupied_;
            for (int b = 0; b < nbins_; ++b) {
                const auto ub = static_cast<std::size_t>(b);
                if (occupied_[ub] && at(pos_[ub]) - ext_[ub] > kDipTolerance * h_) next[ub] = false;
            }
            if (next == use) break;
            use = std::move(next);
        }
        // Enclosed notch runs: flagged or empty bins between two fitted bins,
        // lying below both flanking extremes by more than the tolerance. A
        // step in the outline leaves no such run even where the fit overshoots.
        notch_.assign(static_cast<std::size_t>(nbins_), false);
        std::vector<bool> flagged(static_cast<std::size_t>(nbins_));
        for (int b = 0; b < nbins_; ++b) {
            const auto ub = static_cast<std::size_t>(b);
            flagged[ub] = !occupied_[ub] || at(pos_[ub]) - ext_[ub] > kDipTolerance * h_;
        }
        int b = 0;
        while (b < nbins_) {
            if (!flagged[static_cast<std::size_t>(b)]) {
                ++b;
                continue;
            }
            int e = b;
            while (e < nbins_ && flagged[static_cast<std::size_t>(e)]) ++e;
            if (b > 0 && e < nbins_) {
                const double flank =
                    std::min(ext_[static_cast<std::size_t>(b - 1)], ext_[static_cast<std::size_t>(e)]) - kDipTolerance * h_;
                for (int i = b; i < e; ++i) {
                    const auto ui = static_cast<std::size_t>(i);
                    if (!occupied_[ui] || ext_[ui] < flank) notch_[ui] = true;
                }
            }
            b = e;
        }
        return true;
    }

    /// Whether (along, across) lies in an enclosed notch, beyond the bin's
    /// current extreme and inside the fitted outline. Empty bins reach back to
    /// `floor_value`, the opposite outline.
    [[nodiscard]] bool in_notch(const Eigen::Vector2d& p, double floor_value) const {
        const int b = bin(p[along_]);
        if (b < 0 || b >= nbins_ || !notch_[static_cast<std::size_t>(b)]) return false;
        const double s = sign_ * p[1 - along_];
        if (s > at(p[along_]) + kFillMargin * h_) return false;
        const auto ub = static_cast<std::size_t>(b);
        if (occupied_[ub]) return s > ext_[ub] + 1e-9;
        return s >= sign_ * floor_value - h_;
    }

    /// Fitted outline value (signed back to the `across` coordinate).
    [[nodiscard]] double outline(double along) const { return sign_ * at(along); }

private:
    [[nodiscard]] int bin(double x) const { return static_cast<int>(std::lround((x - lo_) / h_)); }
    [[nodiscard]] double normalized(double x) const { return (x - mid_) / half_; }
    [[nodiscard]] double at(double x) const { return basis_(normalized(x)).dot(coef_); }

    int along_;
    double sign_;
    double h_;
    Basis basis_;
    int nparams_;
    double lo_ = 0.0;
    double mid_ = 0.0;
    double half_ = 1.0;
    int nbins_ = 0;
    std::vector<double> ext_;
    std::vector<double> pos_;
    std::vector<bool> occupied_;
    std::vector<bool> notch_;
    Eigen::VectorXd coef_;
};

double median_edge_length(const SurfacePatch& patch) {
    std::vector<double> lengths;
    const Surface& s = patch.surface();
    for (int v : patch.vertex_ids()) {
        for (int u : s.neighbors(v)) {
            if (u > v && patch.contains(u)) {
                lengths.push_back((s.vertices()[static_cast<std::size_t>(u)] - s.vertices()[static_cast<std::size_t>(v)]).norm());
            }
        }
    }
    if (lengths.empty()) return 1.0;
    auto mid = lengths.begin() + static_cast<std::ptrdiff_t>(lengths.size() / 2);
    std::nth_element(lengths.begin(), mid, lengths.end());
    return std::max(*mid, 1e-6);
}

struct ChartFill {
    std::vector<int> candidates;
    std::string failure;
};

/// Runs the four outline profiles in one chart and returns the surface
/// vertices (non-members) that fall inside an enclosed notch.
ChartFill fill_in_chart(const SurfacePatch& patch, const std::vector<int>& members, const Chart& chart,
                        const Basis& along_a_basis, int along_a_params, const Basis& along_s_basis,
                        int along_s_params, double h) {
    ChartFill out;
    std::vector<Eigen::Vector2d> pts;
    for (int v : members) {
        const auto c = chart.map(patch.surface().vertices()[static_cast<std::size_t>(v)]);
        if (c) pts.push_back(*c);
    }
    if (pts.empty()) {
        out.failure = "empty outline";
        return out;
    }
    std::vector<Profile> profiles;
    profiles.emplace_back(pts, 0, +1.0, h, along_a_basis, along_a_params);
    profiles.emplace_back(pts, 0, -1.0, h, along_a_basis, along_a_params);
    profiles.emplace_back(pts, 1, +1.0, h, along_s_basis, along_s_params);
    profiles.emplace_back(pts, 1, -1.0, h, along_s_basis, along_s_params);
    for (auto& p : profiles) {
        if (!p.fit()) {
            out.failure = "too few outline points for the fit order";
            return out;
        }
    }
    const auto n = static_cast<int>(patch.surface().vertex_count());
    for (int v = 0; v < n; ++v) {
        if (patch.contains(v)) continue;
        const auto c = chart.map(patch.surface().vertices()[static_cast<std::size_t>(v)]);
        if (!c) continue;
        bool inside = false;
        for (std::size_t i = 0; i < 4 && !inside; ++i) {
            const Profile& opposite = profiles[i ^ 1U];
            const int along = i < 2 ? 0 : 1;
            inside = profiles[i].in_notch(*c, opposite.outline((*c)[along]));
        }
        if (inside) out.candidates.push_back(v);
    }
    return out;
}

struct Circle {
    double cy = 0.0;
    double cz = 0.0;
    double r = 0.0;
};

/// Algebraic least-squares circle in the y-z plane.
std::optional<Circle> fit_circle_yz(const std::vector<Vec3>& pts) {
    if (pts.size() < 3) return std::nullopt;
    Eigen::MatrixXd a(static_cast<Eigen::Index>(pts.size()), 3);
    Eigen::VectorXd b(static_cast<Eigen::Index>(pts.size()));
    for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        a(r, 0) = pts[i].y();
        a(r, 1) = pts[i].z();
        a(r, 2) = 1.0;
        b[r] = -(pts[i].y() * pts[i].y() + pts[i].z() * pts[i].z());
    }
    const Eigen::Vector3d x = a.colPivHouseholderQr().solve(b);
    Circle c;
    c.cy = -x[0] / 2.0;
    c.cz = -x[1] / 2.0;
    const double r2 = c.cy * c.cy + c.cz * c.cz - x[2];
    if (!(r2 > 0.0) || !std::isfinite(r2)) return std::nullopt;
    c.r = std::sqrt(r2);
    return c;
}

CurveFitOutcome fill_tibial(const SurfacePatch& patch, int order) {
    CurveFitOutcome out{patch, 0, false, {}};
    const auto ids = patch.vertex_ids();
    const auto& verts = patch.surface().vertices();
    Vec3 c = Vec3::Zero();
    for (int v : ids) c += verts[static_cast<std::size_t>(v)];
    c /= static_cast<double>(ids.size());
    Eigen::MatrixXd p(static_cast<Eigen::Index>(ids.size()), 3);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        p.row(static_cast<Eigen::Index>(i)) = (verts[static_cast<std::size_t>(ids[i])] - c).transpose();
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(p, Eigen::ComputeThinV);
    const Vec3 n = svd.matrixV().col(2);
    Vec3 u = Vec3::UnitX() - Vec3::UnitX().dot(n) * n;
    if (u.norm() < 1e-6) u = svd.matrixV().col(0);
    u.normalize();
    const Vec3 w = n.cross(u);
    double depth = 0.0;
    for (int v : ids) depth = std::max(depth, std::abs(n.dot(verts[static_cast<std::size_t>(v)] - c)));
    const double h = median_edge_length(patch);
    const double band = depth + h;
    Chart chart{[=](const Vec3& x) -> std::optional<Eigen::Vector2d> {
        const Vec3 d = x - c;
        if (std::abs(n.dot(d)) > band) return std::nullopt;
        return Eigen::Vector2d(u.dot(d), w.dot(d));
    }};
    const ChartFill fill =
        fill_in_chart(patch, ids, chart, polynomial_basis(order), order + 1, polynomial_basis(order), order + 1, h);
    if (!fill.failure.empty()) {
        out.skipped = true;
        out.reason = fill.failure;
        return out;
    }
    SurfacePatch domain = patch;
    for (int v : fill.candidates) domain.insert(v);
    out.patch = restricted_dilate(patch, domain, {});
    out.added = out.patch.size() - patch.size();
    return out;
}

CurveFitOutcome fill_femoral(const SurfacePatch& patch, int order) {
    CurveFitOutcome out{patch, 0, false, {}};
    const auto& verts = patch.surface().vertices();
    const auto ids = patch.vertex_ids();
    const double h = median_edge_length(patch);

    // Condyles: split at the notch when a two-lobed footprint is found.
    const NotchResult notch = detect_intercondylar_notch(patch);
    std::vector<std::vector<int>> condyles(notch.fallback ? 1 : 2);
    for (int v : ids) {
        const bool second = !notch.fallback && verts[static_cast<std::size_t>(v)].x() >= notch.position.x();
        condyles[second ? 1 : 0].push_back(v);
    }

    SurfacePatch domain = patch;
    for (std::size_t ci = 0; ci < condyles.size(); ++ci) {
        const auto& members = condyles[ci];
        if (members.empty()) continue;
        std::vector<Vec3> pts;
        double xlo = std::numeric_limits<double>::max();
        double xhi = -xlo;
        for (int v : members) {
            pts.push_back(verts[static_cast<std::size_t>(v)]);
            xlo = std::min(xlo, pts.back().x());
            xhi = std::max(xhi, pts.back().x());
        }
        const auto circle = fit_circle_yz(pts);
        if (!circle) {
            out.skipped = true;
            out.reason = "condyle outline is not curved enough for a polar fit";
            return out;
        }
        // Unwrap the angle at the widest empty sector.
        std::vector<double> angles;
        double dev = 0.0;
        for (const Vec3& q : pts) {
            angles.push_back(std::atan2(q.z() - circle->cz, q.y() - circle->cy));
            dev = std::max(dev, std::abs(std::hypot(q.y() - circle->cy, q.z() - circle->cz) - circle->r));
        }
        std::sort(angles.begin(), angles.end());
        double cut = angles.front();
        double widest = angles.front() + 2.0 * std::numbers::pi - angles.back();
        for (std::size_t i = 1; i < angles.size(); ++i) {
            if (angles[i] - angles[i - 1] > widest) {
                widest = angles[i] - angles[i - 1];
                cut = angles[i];
            }
        }
        const double band = dev + h;
        const bool upper = ci == 1;
        const bool split = condyles.size() == 2;
        const double split_x = notch.position.x();
        const Circle cc = *circle;
        const double r = cc.r;
        Chart chart{[=](const Vec3& x) -> std::optional<Eigen::Vector2d> {
            if (split && (x.x() >= split_x) != upper) return std::nullopt;
            if (x.x() < xlo - 2.0 * h || x.x() > xhi + 2.0 * h) return std::nullopt;
            const double radial = std::hypot(x.y() - cc.cy, x.z() - cc.cz);
            if (std::abs(radial - r) > band) return std::nullopt;
            double theta = std::atan2(x.z() - cc.cz, x.y() - cc.cy);
            while (theta < cut) theta += 2.0 * std::numbers::pi;
            while (theta >= cut + 2.0 * std::numbers::pi) theta -= 2.0 * std::numbers::pi;
            return Eigen::Vector2d(x.x(), theta * r);
        }};
        const ChartFill fill = fill_in_chart(patch, members, chart, polynomial_basis(order), order + 1,
                                             trigonometric_basis(order), 1 + 2 * std::max(1, order / 2), h);
        if (!fill.failure.empty()) {
            out.skipped = true;
            out.reason = fill.failure;
            return out;
        }
        for (int v : fill.candidates) domain.insert(v);
    }
    out.patch = restricted_dilate(patch, domain, {});
    out.added = out.patch.size() - patch.size();
    return out;
}

}  // namespace

CurveFitOutcome fill_holes_curvefit(const SurfacePatch& cart_on_bone, Compartment compartment, int order) {
    if (cart_on_bone.empty()) return {cart_on_bone, 0, true, "empty patch: no outline to fit"};
    if (order < 0) order = compartment == Compartment::tibial ? kDefaultTibialOrder : kDefaultFemoralOrder;
    if (order < 1) throw InvalidArgument("fill_holes_curvefit: order must be at least 1");
    return compartment == Compartment::tibial ? fill_tibial(cart_on_bone, order) : fill_femoral(cart_on_bone, order);
}

}  // namespace kneemorph
