#include "reduction/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "reduction/errors.hpp"

namespace reduction {

namespace {
constexpr const char* kModule = "coupling";
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kHorizonClamp = 1e-12;
constexpr double kTableRelTol = 1e-10;

[[noreturn]] void fail(ErrorKind kind, const std::string& what) {
    throw ReductionError(kind, kModule, what);
}

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        std::ostringstream os;
        os << name << " must be positive and finite (got " << v << ")";
        fail(ErrorKind::validation, os.str());
    }
}
}  // namespace

const char* to_string(CouplingKind kind) {
    switch (kind) {
        case CouplingKind::constant: return "constant";
        case CouplingKind::power_law: return "power_law";
        case CouplingKind::exponential_decay: return "exponential_decay";
        case CouplingKind::finite_time: return "finite_time";
        case CouplingKind::tabulated: return "tabulated";
    }
    return "unknown";
}

const char* to_string(RegimeTag tag) {
    switch (tag) {
        case RegimeTag::complete_infinite_horizon: return "complete_infinite_horizon";
        case RegimeTag::partial: return "partial";
        case RegimeTag::finite_time: return "finite_time";
    }
    return "unknown";
}

CouplingSchedule::CouplingSchedule(CouplingKind kind, double sigma, double alpha, double lambda, double horizon)
    : kind_(kind), sigma_(sigma), alpha_(alpha), lambda_(lambda), horizon_(horizon) {}

CouplingSchedule CouplingSchedule::constant(double sigma) {
    require_positive(sigma, "sigma");
    return CouplingSchedule(CouplingKind::constant, sigma, 0.0, 0.0, 0.0);
}

CouplingSchedule CouplingSchedule::power_law(double sigma, double alpha) {
    require_positive(sigma, "sigma");
    require_positive(alpha, "alpha");
    return CouplingSchedule(CouplingKind::power_law, sigma, alpha, 0.0, 0.0);
}

CouplingSchedule CouplingSchedule::exponential_decay(double sigma, double lambda) {
    require_positive(sigma, "sigma");
    require_positive(lambda, "lambda");
    return CouplingSchedule(CouplingKind::exponential_decay, sigma, 0.0, lambda, 0.0);
}

CouplingSchedule CouplingSchedule::finite_time(double sigma, double horizon) {
    require_positive(sigma, "sigma");
    require_positive(horizon, "T");
    return CouplingSchedule(CouplingKind::finite_time, sigma, 0.0, 0.0, horizon);
}

CouplingSchedule CouplingSchedule::tabulated(std::vector<std::pair<double, double>> table) {
    if (table.empty()) fail(ErrorKind::validation, "tabulated coupling needs at least one node");
    if (table.front().first != 0.0) fail(ErrorKind::validation, "tabulated coupling must start at t = 0");
    for (std::size_t k = 0; k < table.size(); ++k) {
        require_positive(table[k].second, "tabulated sigma");
        if (k > 0 && !(table[k].first > table[k - 1].first)) {
            fail(ErrorKind::validation, "tabulated times must be strictly increasing");
        }
    }
    CouplingSchedule s(CouplingKind::tabulated, 0.0, 0.0, 0.0, 0.0);
    s.table_ = std::move(table);
    return s;
}

std::optional<double> CouplingSchedule::horizon() const {
    if (kind_ == CouplingKind::finite_time) return horizon_;
    return std::nullopt;
}

bool CouplingSchedule::in_domain(double t) const {
    if (!(t >= 0.0)) return false;
    if (kind_ == CouplingKind::finite_time) return t < horizon_;
    return true;
}

double CouplingSchedule::clamp(double t) const {
    if (kind_ != CouplingKind::finite_time) return t;
    if (t >= horizon_) {
        std::ostringstream os;
        os << "t = " << t << " is not before the horizon T = " << horizon_;
        fail(ErrorKind::domain, os.str());
    }
    return std::min(t, horizon_ * (1.0 - kHorizonClamp));
}

void CouplingSchedule::check_interval(double a, double b) const {
    if (!(a >= 0.0) || !(b >= a) || std::isnan(b)) {
        std::ostringstream os;
        os << "invalid integration interval [" << a << ", " << b << "]";
        fail(ErrorKind::domain, os.str());
    }
}

double CouplingSchedule::table_sigma(double t) const {
    if (t >= table_.back().first) return table_.back().second;
    const auto it = std::upper_bound(table_.begin(), table_.end(), t,
                                     [](double x, const auto& node) { return x < node.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (t - lo.first) / (hi.first - lo.first);
    return lo.second + w * (hi.second - lo.second);
}

template <typename F>
double CouplingSchedule::table_integral(double a, double b, F&& f) const {
    double total = 0.0;
    double left = a;
    for (std::size_t k = 1; k < table_.size() && left < b; ++k) {
        const double node = table_[k].first;
        if (node <= left) continue;
        const double right = std::min(node, b);
        total += adaptive_simpson(f, left, right, kTableRelTol);
        left = right;
    }
    if (left < b) {
        // Constant tail past the last node.
        total += (b - left) * f(table_.back().first);
    }
    return total;
}

double CouplingSchedule::sigma(double t) const {
    if (!(t >= 0.0)) fail(ErrorKind::domain, "sigma evaluated at negative time");
    switch (kind_) {
        case CouplingKind::constant: return sigma_;
        case CouplingKind::power_law: return sigma_ * std::sqrt(alpha_) * std::pow(t, 0.5 * (alpha_ - 1.0));
        case CouplingKind::exponential_decay: return sigma_ * std::exp(-lambda_ * t);
        case CouplingKind::finite_time: {
            const double tc = clamp(t);
            return sigma_ * horizon_ / (horizon_ - tc);
        }
        case CouplingKind::tabulated: return table_sigma(t);
    }
    return 0.0;
}

double CouplingSchedule::int_sigma(double a, double b) const {
    check_interval(a, b);
    if (a == b) return 0.0;
    switch (kind_) {
        case CouplingKind::constant: return sigma_ * (b - a);
        case CouplingKind::power_law: {
            const double p = 0.5 * (alpha_ + 1.0);
            return sigma_ * std::sqrt(alpha_) * (std::pow(b, p) - std::pow(a, p)) / p;
        }
        case CouplingKind::exponential_decay:
            return sigma_ * (std::exp(-lambda_ * a) - std::exp(-lambda_ * b)) / lambda_;
        case CouplingKind::finite_time: {
            const double ac = clamp(a);
            const double bc = clamp(b);
            return sigma_ * horizon_ * std::log((horizon_ - ac) / (horizon_ - bc));
        }
        case CouplingKind::tabulated:
            return table_integral(a, b, [this](double t) { return table_sigma(t); });
    }
    return 0.0;
}

double CouplingSchedule::int_sigma_sq(double a, double b) const {
    check_interval(a, b);
    if (a == b) return 0.0;
    const double s2 = sigma_ * sigma_;
    switch (kind_) {
        case CouplingKind::constant: return s2 * (b - a);
        case CouplingKind::power_law: return s2 * (std::pow(b, alpha_) - std::pow(a, alpha_));
        case CouplingKind::exponential_decay:
            return s2 * (std::exp(-2.0 * lambda_ * a) - std::exp(-2.0 * lambda_ * b)) / (2.0 * lambda_);
        case CouplingKind::finite_time: {
            const double ac = clamp(a);
            const double bc = clamp(b);
            // sigma^2 T^2 (1/(T-b) - 1/(T-a)) written without cancellation.
            return s2 * horizon_ * horizon_ * (bc - ac) / ((horizon_ - ac) * (horizon_ - bc));
        }
        case CouplingKind::tabulated:
            return table_integral(a, b, [this](double t) {
                const double s = table_sigma(t);
                return s * s;
            });
    }
    return 0.0;
}

double CouplingSchedule::int_inv_sigma_sq(double a, double b) const {
    check_interval(a, b);
    if (a == b) return 0.0;
    const double s2 = sigma_ * sigma_;
    switch (kind_) {
        case CouplingKind::constant: return (b - a) / s2;
        case CouplingKind::power_law: {
            // sigma^{-2} = t^{1-alpha} / (sigma^2 alpha)
            if (std::abs(alpha_ - 2.0) < 1e-14) {
                return a == 0.0 ? kInf : std::log(b / a) / (2.0 * s2);
            }
            const double p = 2.0 - alpha_;
            if (p < 0.0 && a == 0.0) return kInf;
            return (std::pow(b, p) - std::pow(a, p)) / (p * s2 * alpha_);
        }
        case CouplingKind::exponential_decay:
            return (std::exp(2.0 * lambda_ * b) - std::exp(2.0 * lambda_ * a)) / (2.0 * lambda_ * s2);
        case CouplingKind::finite_time: {
            const double ac = clamp(a);
            const double bc = clamp(b);
            const double ra = horizon_ - ac;
            const double rb = horizon_ - bc;
            return (ra * ra * ra - rb * rb * rb) / (3.0 * s2 * horizon_ * horizon_);
        }
        case CouplingKind::tabulated:
            return table_integral(a, b, [this](double t) {
                const double s = table_sigma(t);
                return 1.0 / (s * s);
            });
    }
    return 0.0;
}

double CouplingSchedule::total_sigma_sq() const {
    switch (kind_) {
        case CouplingKind::exponential_decay: return sigma_ * sigma_ / (2.0 * lambda_);
        case CouplingKind::constant:
        case CouplingKind::power_law:
        case CouplingKind::finite_time:
        case CouplingKind::tabulated: return kInf;
    }
    return kInf;
}

CollapseRegime classify(const CouplingSchedule& schedule) {
    switch (schedule.kind()) {
        case CouplingKind::finite_time: return {RegimeTag::finite_time, schedule.horizon()};
        case CouplingKind::exponential_decay: return {RegimeTag::partial, std::nullopt};
        case CouplingKind::constant:
        case CouplingKind::power_law:
        case CouplingKind::tabulated: return {RegimeTag::complete_infinite_horizon, std::nullopt};
    }
    return {RegimeTag::complete_infinite_horizon, std::nullopt};
}

}  // namespace reduction
