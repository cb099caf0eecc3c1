#pragma once

// Readmission-rate estimation: logistic regression of the 30-day readmission
// outcome on facility, patient type, their interaction and covariates, with
// percentile-bootstrap intervals for the per-cell rates.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "snfmdp/model.hpp"
#include "snfmdp/scenario.hpp"

namespace snfmdp {

/// A model fit that cannot be completed (separation, rank deficiency, no convergence).
class EstimationError : public SolverError {
public:
    using SolverError::SolverError;
};

struct DischargeRecord {
    int readmitted = 0;
    std::string snf;
    std::string patient_type;
    std::vector<double> covariates;  // aligned with DischargeData::covariate_names
};

struct DischargeData {
    std::vector<std::string> covariate_names;
    std::vector<DischargeRecord> records;
};

// ---------------------------------------------------------------------------
// CSV input

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    bool quoted = false;
    for (std::size_t n = 0; n < line.size(); ++n) {
        const char c = line[n];
        if (quoted) {
            if (c == '"' && n + 1 < line.size() && line[n + 1] == '"') {
                field += '"';
                ++n;
            } else if (c == '"') {
                quoted = false;
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(field);
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline bool is_missing(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "null";
}

inline std::string join_lines(const std::vector<std::size_t>& lines) {
    std::string out;
    for (std::size_t n = 0; n < lines.size(); ++n) out += (n ? ", " : "") + std::to_string(lines[n]);
    return out;
}

}  // namespace detail

/// Header `readmitted,snf,patient_type,<covariates...>`. Any row with a
/// missing or malformed value rejects the whole input; the error lists every
/// offending line.
inline DischargeData read_discharge_csv(std::istream& in, const std::string& source = "input") {
    std::string line;
    if (!std::getline(in, line)) throw InputError(source + ": empty file");
    std::vector<std::string> header = detail::split_csv_line(line);
    for (auto& h : header) h = detail::trim(h);
    if (header.size() < 3 || header[0] != "readmitted" || header[1] != "snf" || header[2] != "patient_type")
        throw InputError(source + ": header must start with readmitted,snf,patient_type");
    DischargeData data;
    data.covariate_names.assign(header.begin() + 3, header.end());
    std::vector<std::size_t> missing;
    std::vector<std::string> malformed;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size()) {
            malformed.push_back("line " + std::to_string(lineno) + ": expected " + std::to_string(header.size()) +
                                " fields, got " + std::to_string(fields.size()));
            continue;
        }
        bool has_missing = false;
        for (auto& f : fields) {
            f = detail::trim(f);
            has_missing = has_missing || detail::is_missing(f);
        }
        if (has_missing) {
            missing.push_back(lineno);
            continue;
        }
        DischargeRecord r;
        if (fields[0] == "0") {
            r.readmitted = 0;
        } else if (fields[0] == "1") {
            r.readmitted = 1;
        } else {
            malformed.push_back("line " + std::to_string(lineno) + ": readmitted must be 0 or 1");
            continue;
        }
        r.snf = fields[1];
        r.patient_type = fields[2];
        bool ok = true;
        for (std::size_t c = 3; c < fields.size(); ++c) {
            try {
                std::size_t used = 0;
                const double v = std::stod(fields[c], &used);
                if (used != fields[c].size() || !std::isfinite(v)) throw std::invalid_argument(fields[c]);
                r.covariates.push_back(v);
            } catch (const std::logic_error&) {
                malformed.push_back("line " + std::to_string(lineno) + ": column " + header[c] + " is not numeric");
                ok = false;
                break;
            }
        }
        if (ok) data.records.push_back(std::move(r));
    }
    if (!missing.empty() || !malformed.empty()) {
        std::string msg = source + ": rejected";
        if (!missing.empty()) msg += "; missing values on lines " + detail::join_lines(missing);
        for (const auto& m : malformed) msg += "; " + m;
        throw InputError(msg);
    }
    if (data.records.empty()) throw InputError(source + ": no records");
    return data;
}

inline DischargeData read_discharge_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    return read_discharge_csv(in, path);
}

// ---------------------------------------------------------------------------
// Model terms and design matrix

struct CovariateSpec {
    std::vector<std::string> snf_levels;   // first level is the reference
    std::vector<std::string> type_levels;  // first level is the reference
    std::vector<std::string> covariates;   // subset of the data's covariate columns

    /// Levels in order of first appearance, every covariate column included.
    static CovariateSpec from_data(const DischargeData& data) {
        CovariateSpec s;
        for (const auto& r : data.records) {
            if (std::find(s.snf_levels.begin(), s.snf_levels.end(), r.snf) == s.snf_levels.end())
                s.snf_levels.push_back(r.snf);
            if (std::find(s.type_levels.begin(), s.type_levels.end(), r.patient_type) == s.type_levels.end())
                s.type_levels.push_back(r.patient_type);
        }
        s.covariates = data.covariate_names;
        return s;
    }

    std::vector<std::string> column_names() const {
        std::vector<std::string> names{"(intercept)"};
        for (std::size_t a = 1; a < snf_levels.size(); ++a) names.push_back("snf=" + snf_levels[a]);
        for (std::size_t t = 1; t < type_levels.size(); ++t) names.push_back("type=" + type_levels[t]);
        for (std::size_t a = 1; a < snf_levels.size(); ++a)
            for (std::size_t t = 1; t < type_levels.size(); ++t)
                names.push_back("snf=" + snf_levels[a] + ":type=" + type_levels[t]);
        for (const auto& c : covariates) names.push_back(c);
        return names;
    }

    std::size_t num_columns() const {
        const std::size_t m = snf_levels.size();
        const std::size_t t = type_levels.size();
        return 1 + (m - 1) + (t - 1) + (m - 1) * (t - 1) + covariates.size();
    }
};

namespace detail {

inline std::size_t level_index(const std::vector<std::string>& levels, const std::string& value, const char* what) {
    const auto it = std::find(levels.begin(), levels.end(), value);
    if (it == levels.end()) throw InputError(std::string("unknown ") + what + " label \"" + value + "\"");
    return static_cast<std::size_t>(it - levels.begin());
}

inline std::vector<std::size_t> covariate_columns(const DischargeData& data, const CovariateSpec& spec) {
    std::vector<std::size_t> cols;
    for (const auto& c : spec.covariates) cols.push_back(level_index(data.covariate_names, c, "covariate"));
    return cols;
}

/// One design row for a (snf, type) cell and covariate values.
template <class Row>
void fill_row(Row&& row, const CovariateSpec& spec, std::size_t a, std::size_t t,
                     const std::vector<double>& cov) {
    const std::size_t m = spec.snf_levels.size();
    const std::size_t nt = spec.type_levels.size();
    row.setZero();
    row(0) = 1.0;
    std::size_t col = 1;
    if (a > 0) row(static_cast<Eigen::Index>(col + a - 1)) = 1.0;
    col += m - 1;
    if (t > 0) row(static_cast<Eigen::Index>(col + t - 1)) = 1.0;
    col += nt - 1;
    if (a > 0 && t > 0) row(static_cast<Eigen::Index>(col + (a - 1) * (nt - 1) + (t - 1))) = 1.0;
    col += (m - 1) * (nt - 1);
    for (std::size_t c = 0; c < cov.size(); ++c) row(static_cast<Eigen::Index>(col + c)) = cov[c];
}

}  // namespace detail

struct Design {
    Eigen::MatrixXd X;
    Eigen::VectorXd y;
    std::vector<std::string> columns;
};

inline Design design_matrix(const DischargeData& data, const CovariateSpec& spec) {
    if (spec.snf_levels.empty() || spec.type_levels.empty()) throw InputError("covariate spec needs facility and type levels");
    const auto cov_cols = detail::covariate_columns(data, spec);
    Design d;
    d.columns = spec.column_names();
    const auto n = static_cast<Eigen::Index>(data.records.size());
    d.X.resize(n, static_cast<Eigen::Index>(spec.num_columns()));
    d.y.resize(n);
    std::vector<double> cov(cov_cols.size());
    for (Eigen::Index r = 0; r < n; ++r) {
        const auto& rec = data.records[static_cast<std::size_t>(r)];
        const std::size_t a = detail::level_index(spec.snf_levels, rec.snf, "facility");
        const std::size_t t = detail::level_index(spec.type_levels, rec.patient_type, "patient type");
        for (std::size_t c = 0; c < cov_cols.size(); ++c) cov[c] = rec.covariates[cov_cols[c]];
        detail::fill_row(d.X.row(r), spec, a, t, cov);
        d.y(r) = rec.readmitted;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Likelihood

inline double log1pexp(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

inline double inv_logit(double eta) {
    if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
    const double e = std::exp(eta);
    return e / (1.0 + e);
}

/// Bernoulli log-likelihood sum y*eta - log(1 + e^eta).
inline double logistic_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    double ll = 0.0;
    for (Eigen::Index r = 0; r < eta.size(); ++r) ll += y(r) * eta(r) - log1pexp(eta(r));
    return ll;
}

/// X^T (y - p)
inline Eigen::VectorXd logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd resid(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) resid(r) = y(r) - inv_logit(eta(r));
    return X.transpose() * resid;
}

/// X^T W X, W = diag(p(1-p)); the negative Hessian.
inline Eigen::MatrixXd logistic_information(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = X * beta;
    Eigen::VectorXd w(eta.size());
    for (Eigen::Index r = 0; r < eta.size(); ++r) {
        const double p = inv_logit(eta(r));
        w(r) = p * (1.0 - p);
    }
    return X.transpose() * w.asDiagonal() * X;
}

struct LogisticOptions {
    int max_iterations = 100;
    double gradient_tol = 1e-8;
};

struct LogisticFit {
    CovariateSpec spec;
    std::vector<std::string> columns;
    Eigen::VectorXd coef;
    Eigen::VectorXd std_errors;
    Eigen::MatrixXd covariance;
    double loglik = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    std::vector<double> loglik_history;
};

namespace detail {

inline std::vector<std::string> dependent_columns(const Eigen::MatrixXd& X, const std::vector<std::string>& names) {
    std::vector<std::string> out;
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> full(X);
        full.setThreshold(1e-10);
        if (full.rank() == X.cols()) return out;
    }
    Eigen::Index rank = 0;
    std::vector<Eigen::Index> kept;
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
        Eigen::MatrixXd sub(X.rows(), static_cast<Eigen::Index>(kept.size()) + 1);
        for (std::size_t k = 0; k < kept.size(); ++k) sub.col(static_cast<Eigen::Index>(k)) = X.col(kept[k]);
        sub.col(sub.cols() - 1) = X.col(c);
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sub);
        qr.setThreshold(1e-10);
        if (qr.rank() > rank) {
            ++rank;
            kept.push_back(c);
        } else {
            out.push_back(names[static_cast<std::size_t>(c)]);
        }
    }
    return out;
}

inline std::string join_names(const std::vector<std::string>& names) {
    std::string out;
    for (std::size_t n = 0; n < names.size(); ++n) out += (n ? ", " : "") + names[n];
    return out;
}

/// Cells with an all-0 or all-1 outcome make the cell's own parameter diverge.
inline std::vector<std::string> separated_cells(const DischargeData& data, const CovariateSpec& spec) {
    const std::size_t m = spec.snf_levels.size();
    const std::size_t nt = spec.type_levels.size();
    std::vector<std::size_t> count(m * nt, 0), pos(m * nt, 0);
    for (const auto& r : data.records) {
        const std::size_t c = level_index(spec.snf_levels, r.snf, "facility") * nt +
                              level_index(spec.type_levels, r.patient_type, "patient type");
        ++count[c];
        pos[c] += static_cast<std::size_t>(r.readmitted);
    }
    std::vector<std::string> out;
    for (std::size_t a = 0; a < m; ++a)
        for (std::size_t t = 0; t < nt; ++t) {
            const std::size_t c = a * nt + t;
            if (count[c] > 0 && (pos[c] == 0 || pos[c] == count[c]))
                out.push_back("cell snf=" + spec.snf_levels[a] + ",type=" + spec.type_levels[t] +
                              (pos[c] == 0 ? " (no readmissions)" : " (all readmitted)"));
        }
    return out;
}

inline std::vector<std::string> empty_cells(const DischargeData& data, const CovariateSpec& spec) {
    const std::size_t nt = spec.type_levels.size();
    std::vector<bool> seen(spec.snf_levels.size() * nt, false);
    for (const auto& r : data.records)
        seen[level_index(spec.snf_levels, r.snf, "facility") * nt + level_index(spec.type_levels, r.patient_type, "patient type")] = true;
    std::vector<std::string> out;
    for (std::size_t a = 0; a < spec.snf_levels.size(); ++a)
        for (std::size_t t = 0; t < nt; ++t)
            if (!seen[a * nt + t]) out.push_back("snf=" + spec.snf_levels[a] + ",type=" + spec.type_levels[t]);
    return out;
}

}  // namespace detail

/// Maximum-likelihood fit by Newton's method with step halving.
inline LogisticFit fit_logistic(const DischargeData& data, const CovariateSpec& spec, const LogisticOptions& opt = {}) {
    if (data.records.empty()) throw InputError("fit_logistic: no records");
    if (const auto empty = detail::empty_cells(data, spec); !empty.empty())
        throw EstimationError("fit_logistic: no records for cells " + detail::join_names(empty));
    const Design d = design_matrix(data, spec);
    if (const auto dep = detail::dependent_columns(d.X, d.columns); !dep.empty())
        throw EstimationError("fit_logistic: design matrix is rank deficient; dependent columns: " + detail::join_names(dep));
    if (const auto sep = detail::separated_cells(data, spec); !sep.empty())
        throw EstimationError("fit_logistic: separation in " + detail::join_names(sep));

    LogisticFit fit;
    fit.spec = spec;
    fit.columns = d.columns;
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.X.cols());
    double ll = logistic_loglik(d.X, d.y, beta);
    fit.loglik_history.push_back(ll);
    Eigen::VectorXd grad = logistic_gradient(d.X, d.y, beta);
    int it = 0;
    while (grad.lpNorm<Eigen::Infinity>() > opt.gradient_tol) {
        if (it >= opt.max_iterations) {
            std::ostringstream msg;
            msg << "fit_logistic: no convergence in " << opt.max_iterations << " iterations; gradient sup-norm "
                << grad.lpNorm<Eigen::Infinity>();
            std::vector<std::string> large;
            for (Eigen::Index c = 0; c < beta.size(); ++c)
                if (std::abs(beta(c)) > 15.0) large.push_back(d.columns[static_cast<std::size_t>(c)]);
            if (!large.empty()) msg << "; possible separation in " << detail::join_names(large);
            throw EstimationError(msg.str());
        }
        ++it;
        const Eigen::MatrixXd info = logistic_information(d.X, beta);
        const Eigen::VectorXd step = info.ldlt().solve(grad);
        // Near the optimum the log-likelihood gain of a Newton step is below
        // the rounding error of the sum, so ascent is judged up to that noise.
        const double noise = 1e-12 * std::max(1.0, std::abs(ll));
        double t = 1.0;
        Eigen::VectorXd trial = beta + step;
        double trial_ll = logistic_loglik(d.X, d.y, trial);
        for (int halving = 0; halving < 40 && !(trial_ll >= ll - noise); ++halving) {
            t *= 0.5;
            trial = beta + t * step;
            trial_ll = logistic_loglik(d.X, d.y, trial);
        }
        if (!(trial_ll >= ll - noise)) break;
        beta = trial;
        ll = trial_ll;
        fit.loglik_history.push_back(ll);
        grad = logistic_gradient(d.X, d.y, beta);
    }
    fit.coef = beta;
    fit.loglik = ll;
    fit.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    fit.iterations = it;
    if (fit.gradient_norm > opt.gradient_tol)
        throw EstimationError("fit_logistic: stalled with gradient sup-norm " + std::to_string(fit.gradient_norm));
    fit.covariance = logistic_information(d.X, beta).inverse();
    fit.std_errors = fit.covariance.diagonal().cwiseSqrt();
    return fit;
}

// ---------------------------------------------------------------------------
// Rates

/// Per-cell rates in percent, rates[type][snf], ready for the costs block of an instance.
struct RateTable {
    std::vector<std::string> type_levels;
    std::vector<std::string> snf_levels;
    std::vector<std::vector<double>> rates;
    std::vector<std::vector<double>> lower;
    std::vector<std::vector<double>> upper;
    std::map<std::string, double> profile;
    std::size_t bootstrap_replicates = 0;
    std::size_t bootstrap_failures = 0;
};

using CovariateProfile = std::map<std::string, double>;

/// Mean of each continuous covariate, mode of each 0/1 covariate.
inline CovariateProfile default_profile(const DischargeData& data, const CovariateSpec& spec) {
    const auto cols = detail::covariate_columns(data, spec);
    CovariateProfile p;
    for (std::size_t c = 0; c < cols.size(); ++c) {
        bool binary = true;
        double sum = 0.0;
        std::size_t ones = 0;
        for (const auto& r : data.records) {
            const double v = r.covariates[cols[c]];
            sum += v;
            if (v == 1.0) ++ones;
            else if (v != 0.0) binary = false;
        }
        const double n = static_cast<double>(data.records.size());
        p[spec.covariates[c]] = binary ? (2 * ones > data.records.size() ? 1.0 : 0.0) : sum / n;
    }
    return p;
}

inline RateTable predict_rates(const LogisticFit& fit, const CovariateProfile& profile) {
    const CovariateSpec& spec = fit.spec;
    std::vector<double> cov;
    for (const auto& c : spec.covariates) {
        const auto it = profile.find(c);
        if (it == profile.end()) throw InputError("reference profile is missing covariate \"" + c + "\"");
        cov.push_back(it->second);
    }
    RateTable t;
    t.type_levels = spec.type_levels;
    t.snf_levels = spec.snf_levels;
    t.profile = profile;
    t.rates.assign(spec.type_levels.size(), std::vector<double>(spec.snf_levels.size()));
    Eigen::RowVectorXd row(static_cast<Eigen::Index>(spec.num_columns()));
    for (std::size_t ti = 0; ti < spec.type_levels.size(); ++ti)
        for (std::size_t a = 0; a < spec.snf_levels.size(); ++a) {
            detail::fill_row(row, spec, a, ti, cov);
            t.rates[ti][a] = 100.0 * inv_logit(row.dot(fit.coef));
        }
    t.lower = t.rates;
    t.upper = t.rates;
    return t;
}

/// Row indices of one bootstrap resample of n records.
using Resampler = std::function<std::vector<std::size_t>(std::size_t n, std::mt19937_64& gen)>;

inline std::vector<std::size_t> resample_with_replacement(std::size_t n, std::mt19937_64& gen) {
    std::vector<std::size_t> idx(n);
    for (auto& i : idx) i = static_cast<std::size_t>(uniform01(gen) * static_cast<double>(n));
    return idx;
}

struct BootstrapOptions {
    std::size_t replicates = 1000;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    Resampler resampler = resample_with_replacement;
    LogisticOptions fit;
};

/// Linear-interpolation quantile of sorted data.
inline double quantile_sorted(const std::vector<double>& v, double q) {
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Point estimates from the full data; 2.5/97.5 percentile bounds from refits
/// on resampled rows (resample b seeded from derive_seed(seed, b)). Bounds are
/// widened when needed so that lower <= point <= upper.
inline RateTable bootstrap_ci(const DischargeData& data, const CovariateSpec& spec, const CovariateProfile& profile,
                              const BootstrapOptions& opt) {
    if (opt.replicates < 100) throw InputError("bootstrap needs at least 100 replicates");
    RateTable table = predict_rates(fit_logistic(data, spec, opt.fit), profile);
    const std::size_t nt = spec.type_levels.size();
    const std::size_t m = spec.snf_levels.size();
    std::vector<std::vector<double>> draws(opt.replicates);  // flattened rates, empty on failure
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t b = next++; b < opt.replicates; b = next++) {
            std::mt19937_64 gen(derive_seed(opt.seed, b));
            const auto idx = opt.resampler(data.records.size(), gen);
            DischargeData sample;
            sample.covariate_names = data.covariate_names;
            sample.records.reserve(idx.size());
            for (std::size_t i : idx) sample.records.push_back(data.records.at(i));
            try {
                const RateTable r = predict_rates(fit_logistic(sample, spec, opt.fit), profile);
                std::vector<double> flat;
                for (const auto& row : r.rates) flat.insert(flat.end(), row.begin(), row.end());
                draws[b] = std::move(flat);
            } catch (const EstimationError&) {
            }
        }
    };
    const unsigned jobs = std::max(1u, opt.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    std::size_t failures = 0;
    for (const auto& d : draws) failures += d.empty() ? 1 : 0;
    if (static_cast<double>(failures) > 0.05 * static_cast<double>(opt.replicates))
        throw EstimationError("bootstrap: " + std::to_string(failures) + " of " + std::to_string(opt.replicates) +
                              " resample fits failed (limit 5%)");
    table.bootstrap_replicates = opt.replicates;
    table.bootstrap_failures = failures;
    for (std::size_t ti = 0; ti < nt; ++ti)
        for (std::size_t a = 0; a < m; ++a) {
            std::vector<double> v;
            for (const auto& d : draws)
                if (!d.empty()) v.push_back(d[ti * m + a]);
            std::sort(v.begin(), v.end());
            const double point = table.rates[ti][a];
            table.lower[ti][a] = std::min(point, quantile_sorted(v, 0.025));
            table.upper[ti][a] = std::max(point, quantile_sorted(v, 0.975));
        }
    return table;
}

}  // namespace snfmdp
