#pragma once

// Model-based dual-criterion design. (Y_T, Y_R) are thresholded latent
// bivariate normal variables whose means are linear in the standardized dose;
// pending outcomes are handled by data augmentation: each cycle imputes the
// pending outcomes from their posterior predictive given the current
// parameters (I-step) and then updates latents and parameters by Gibbs
// sampling on the completed data (P-step).

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dualdose/design_config.hpp"
#include "dualdose/normal.hpp"
#include "dualdose/trial_core.hpp"

namespace dualdose {

class McmcError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct ProbitParams {
    double alpha_t = 0.0;
    double beta_t = 0.0;
    double alpha_r = 0.0;
    double beta_r = 0.0;
    double rho = 0.0;

    double linear(Endpoint e, double d_star) const {
        return e == Endpoint::dlt ? alpha_t + beta_t * d_star : alpha_r + beta_r * d_star;
    }
};

/// Joint probabilities p_ab = Pr(Y_T = a, Y_R = b) at one dose.
struct CellProbs {
    double p00 = 0.0;
    double p01 = 0.0;
    double p10 = 0.0;
    double p11 = 0.0;

    double sum() const { return p00 + p01 + p10 + p11; }
    double marginal_dlt() const { return p10 + p11; }
    double marginal_intolerance() const { return p01 + p11; }
};

inline CellProbs cell_probs(const ProbitParams& p, double d_star) {
    const double mt = p.linear(Endpoint::dlt, d_star);
    const double mr = p.linear(Endpoint::intolerance, d_star);
    const double pt = normal_cdf(mt);
    const double pr = normal_cdf(mr);
    // Pr(Z_T >= 0, Z_R >= 0) = Pr(-Z_T <= mt, -Z_R <= mr), same correlation.
    double p11 = bvn_cdf(mt, mr, p.rho);
    p11 = std::clamp(p11, std::max(0.0, pt + pr - 1.0), std::min(pt, pr));
    CellProbs c;
    c.p11 = p11;
    c.p10 = pt - p11;
    c.p01 = pr - p11;
    c.p00 = 1.0 - pt - pr + p11;
    return c;
}

//---------------------------------------------------------------------------//
/*!
 * Posterior predictive distribution of the pending outcome(s) of a patient
 * with follow-up t and no event so far on the pending endpoint(s), assuming
 * event times uniform over their windows and conditionally independent.
 *
 * The result is a joint distribution over (Y_T, Y_R); observed components
 * carry their observed value with certainty.
 */
inline CellProbs predictive_probs(const CellProbs& c, double t, double window_t, double window_r,
                                  MissingPattern pattern, std::optional<bool> observed = std::nullopt) {
    if (!(t >= 0.0)) throw DesignError("predictive_probs: follow-up must be nonnegative");
    const auto normalized = [](double a, double b) { return a + b > 0.0 ? a / (a + b) : 0.0; };
    CellProbs out;
    switch (pattern) {
        case MissingPattern::both_pending: {
            if (!(t < window_t && t < window_r))
                throw DesignError("predictive_probs: both pending requires t below both windows");
            const double st = 1.0 - t / window_t;
            const double sr = 1.0 - t / window_r;
            const double w00 = c.p00;
            const double w01 = sr * c.p01;
            const double w10 = st * c.p10;
            const double w11 = st * sr * c.p11;
            const double total = w00 + w01 + w10 + w11;
            if (!(total > 0.0)) throw DesignError("predictive_probs: degenerate cell probabilities");
            out = {w00 / total, w01 / total, w10 / total, w11 / total};
            break;
        }
        case MissingPattern::dlt_observed_intolerance_pending: {
            if (!observed) throw DesignError("predictive_probs: observed DLT value required");
            if (!(t < window_r)) throw DesignError("predictive_probs: pending intolerance requires t < T_R");
            const double sr = 1.0 - t / window_r;
            if (*observed) {
                const double q = normalized(sr * c.p11, c.p10);
                out = {0.0, 0.0, 1.0 - q, q};
            } else {
                const double q = normalized(sr * c.p01, c.p00);
                out = {1.0 - q, q, 0.0, 0.0};
            }
            break;
        }
        case MissingPattern::dlt_pending_intolerance_observed: {
            if (!observed) throw DesignError("predictive_probs: observed intolerance value required");
            if (!(t < window_t)) throw DesignError("predictive_probs: pending DLT requires t < T_T");
            const double st = 1.0 - t / window_t;
            if (*observed) {
                const double q = normalized(st * c.p11, c.p01);
                out = {0.0, 1.0 - q, 0.0, q};
            } else {
                const double q = normalized(st * c.p10, c.p00);
                out = {1.0 - q, 0.0, q, 0.0};
            }
            break;
        }
        case MissingPattern::both_observed:
            throw DesignError("predictive_probs: nothing is pending");
    }
    return out;
}

//---------------------------------------------------------------------------//
// Data preparation
//---------------------------------------------------------------------------//

/// One patient as seen by the latent model at the analysis time.
struct LatentObservation {
    std::size_t level = 0;
    std::optional<bool> dlt;          ///< nullopt while pending
    std::optional<bool> intolerance;  ///< nullopt while pending
    double follow_up = 0.0;
    MissingPattern pattern = MissingPattern::both_observed;
};

inline std::vector<LatentObservation> prepare_observations(const TrialState& s, const EndpointWindows& w) {
    std::vector<LatentObservation> out;
    out.reserve(s.patients.size());
    for (const auto& p : s.patients) {
        LatentObservation o;
        o.level = p.level;
        o.dlt = observed_value(p, Endpoint::dlt, s.clock, w);
        o.intolerance = observed_value(p, Endpoint::intolerance, s.clock, w);
        o.follow_up = follow_up(p, s.clock, w);
        o.pattern = classify_pattern(p, s.clock, w);
        out.push_back(o);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Posterior draws
//---------------------------------------------------------------------------//
struct PosteriorDraws {
    std::vector<ProbitParams> draws;
    std::vector<double> d_star;
    double rho_acceptance = 0.0;

    std::size_t levels() const { return d_star.size(); }

    /// Posterior mean of Phi(alpha_k + beta_k d*_j).
    double pi_hat(Endpoint e, std::size_t j) const {
        double s = 0.0;
        for (const auto& p : draws) s += normal_cdf(p.linear(e, d_star[j]));
        return s / static_cast<double>(draws.size());
    }

    std::vector<double> pi_hat(Endpoint e) const {
        std::vector<double> out(levels());
        for (std::size_t j = 0; j < levels(); ++j) out[j] = pi_hat(e, j);
        return out;
    }

    /// Batch-means Monte Carlo standard error of pi_hat(e, j).
    double pi_hat_se(Endpoint e, std::size_t j, std::size_t batches = 20) const {
        const std::size_t n = draws.size();
        if (n < 2 * batches) batches = std::max<std::size_t>(1, n / 2);
        const std::size_t size = n / batches;
        if (batches < 2 || size == 0) return 0.0;
        std::vector<double> means(batches, 0.0);
        for (std::size_t b = 0; b < batches; ++b) {
            for (std::size_t i = b * size; i < (b + 1) * size; ++i)
                means[b] += normal_cdf(draws[i].linear(e, d_star[j]));
            means[b] /= static_cast<double>(size);
        }
        double mean = 0.0;
        for (double m : means) mean += m;
        mean /= static_cast<double>(batches);
        double var = 0.0;
        for (double m : means) var += (m - mean) * (m - mean);
        var /= static_cast<double>(batches - 1);
        return std::sqrt(var / static_cast<double>(batches));
    }

    /// Fraction of draws with Phi(alpha_k + beta_k d*_j) > phi.
    double exceed_prob(Endpoint e, std::size_t j, double phi) const {
        if (draws.empty()) throw DesignError("exceed_prob: no posterior draws");
        if (phi >= 1.0) return 0.0;
        if (phi <= 0.0) return 1.0;
        const double threshold = normal_quantile(phi);
        std::size_t count = 0;
        for (const auto& p : draws)
            if (p.linear(e, d_star[j]) > threshold) ++count;
        return static_cast<double>(count) / static_cast<double>(draws.size());
    }
};

inline double overdose_prob_titedc(const PosteriorDraws& draws, std::size_t j, Endpoint e, double phi) {
    return draws.exceed_prob(e, j, phi);
}

//---------------------------------------------------------------------------//
/*!
 * Gibbs sampler for the bivariate probit model.
 *
 * Latent Z are drawn componentwise from their truncated conditionals. Each
 * endpoint's (alpha, beta) is drawn from its conjugate normal full
 * conditional given Z and the other endpoint (regression of
 * Z_k - rho (Z_other - mu_other) with residual variance 1 - rho^2), with the
 * slope truncated at zero. rho moves by reflected random-walk Metropolis on
 * (0, 1).
 */
class ProbitSampler {
  public:
    ProbitSampler(std::vector<LatentObservation> data, std::vector<double> d_star, EndpointWindows windows,
                  PriorConfig prior, McmcConfig mcmc)
        : data_(std::move(data)), d_star_(std::move(d_star)), windows_(windows), prior_(prior),
          mcmc_(mcmc), rng_(mcmc.seed) {
        const std::size_t n = data_.size();
        y_t_.assign(n, -1);
        y_r_.assign(n, -1);
        z_t_.assign(n, 0.0);
        z_r_.assign(n, 0.0);
        x_.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto& o = data_[i];
            if (o.level >= d_star_.size()) throw DesignError("observation dose level outside the grid");
            x_[i] = d_star_[o.level];
            if (o.dlt) y_t_[i] = *o.dlt;
            if (o.intolerance) y_r_[i] = *o.intolerance;
            z_t_[i] = y_t_[i] < 0 ? 0.0 : (y_t_[i] ? 0.5 : -0.5);
            z_r_[i] = y_r_[i] < 0 ? 0.0 : (y_r_[i] ? 0.5 : -0.5);
            if (o.pattern != MissingPattern::both_observed) pending_.push_back(i);
        }
        params_.alpha_t = params_.alpha_r = prior_.intercept_mean;
        params_.beta_t = params_.beta_r = 0.5;
        params_.rho = 0.3;
    }

    /// Runs the full schedule and returns the retained draws. With
    /// `augment` false, pending outcomes are left missing throughout (the
    /// observed-data fit).
    PosteriorDraws run(bool augment = true) {
        for (int i = 0; i < mcmc_.warm_start; ++i) sweep(false, i);
        PosteriorDraws out;
        out.d_star = d_star_;
        out.draws.reserve(static_cast<std::size_t>(mcmc_.retained));
        const long total = static_cast<long>(mcmc_.burn_in) + static_cast<long>(mcmc_.retained) * mcmc_.thinning;
        for (long c = 0; c < total; ++c) {
            if (augment) impute();
            for (int k = 0; k < mcmc_.da_cycles; ++k) sweep(augment, mcmc_.warm_start + c);
            if (c >= mcmc_.burn_in && (c - mcmc_.burn_in) % mcmc_.thinning == 0) out.draws.push_back(params_);
        }
        out.rho_acceptance = proposals_ ? static_cast<double>(accepted_) / static_cast<double>(proposals_) : 0.0;
        return out;
    }

  private:
    // I-step: complete the pending outcomes from their posterior predictive.
    void impute() {
        if (pending_.empty()) return;
        std::vector<std::optional<CellProbs>> cache(d_star_.size());
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (std::size_t i : pending_) {
            const auto& o = data_[i];
            auto& cells = cache[o.level];
            if (!cells) cells = cell_probs(params_, d_star_[o.level]);
            std::optional<bool> seen;
            if (o.pattern == MissingPattern::dlt_observed_intolerance_pending) seen = o.dlt;
            if (o.pattern == MissingPattern::dlt_pending_intolerance_observed) seen = o.intolerance;
            const CellProbs q = predictive_probs(*cells, o.follow_up, windows_.dlt, windows_.intolerance, o.pattern, seen);
            const double u = unif(rng_);
            int a = 0;
            int b = 0;
            if (u < q.p00) { a = 0; b = 0; }
            else if (u < q.p00 + q.p01) { a = 0; b = 1; }
            else if (u < q.p00 + q.p01 + q.p10) { a = 1; b = 0; }
            else { a = 1; b = 1; }
            y_t_[i] = a;
            y_r_[i] = b;
        }
    }

    // P-step: one Gibbs sweep over latents, coefficients, and rho. Without
    // augmentation pending outcomes are treated as missing.
    void sweep(bool augmented, long iteration) {
        const double rho = params_.rho;
        const double sd = std::sqrt(1.0 - rho * rho);
        std::normal_distribution<double> std_normal(0.0, 1.0);
        const std::size_t n = data_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const auto& o = data_[i];
            const bool pend_t = !o.dlt;
            const bool pend_r = !o.intolerance;
            const int yt = (pend_t && !augmented) ? -1 : y_t_[i];
            const int yr = (pend_r && !augmented) ? -1 : y_r_[i];
            const double mt = params_.alpha_t + params_.beta_t * x_[i];
            const double mr = params_.alpha_r + params_.beta_r * x_[i];
            double cm = mt + rho * (z_r_[i] - mr);
            z_t_[i] = yt < 0 ? cm + sd * std_normal(rng_) : sample_signed_normal(cm, sd, yt == 1, rng_);
            cm = mr + rho * (z_t_[i] - mt);
            z_r_[i] = yr < 0 ? cm + sd * std_normal(rng_) : sample_signed_normal(cm, sd, yr == 1, rng_);
        }

        const double resid_var = 1.0 - rho * rho;
        {
            // Endpoint T given Z and the intolerance coefficients.
            double s1 = 0, sx = 0, sxx = 0, su = 0, sxu = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double u = z_t_[i] - rho * (z_r_[i] - params_.alpha_r - params_.beta_r * x_[i]);
                s1 += 1; sx += x_[i]; sxx += x_[i] * x_[i]; su += u; sxu += x_[i] * u;
            }
            draw_coefficients(s1, sx, sxx, su, sxu, resid_var, params_.alpha_t, params_.beta_t);
        }
        {
            double s1 = 0, sx = 0, sxx = 0, su = 0, sxu = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const double u = z_r_[i] - rho * (z_t_[i] - params_.alpha_t - params_.beta_t * x_[i]);
                s1 += 1; sx += x_[i]; sxx += x_[i] * x_[i]; su += u; sxu += x_[i] * u;
            }
            draw_coefficients(s1, sx, sxx, su, sxu, resid_var, params_.alpha_r, params_.beta_r);
        }
        update_rho();

        if (!std::isfinite(params_.alpha_t) || !std::isfinite(params_.beta_t) || !std::isfinite(params_.alpha_r) ||
            !std::isfinite(params_.beta_r) || !std::isfinite(params_.rho)) {
            std::ostringstream msg;
            msg << "non-finite MCMC state at iteration " << iteration << ": alpha_t=" << params_.alpha_t
                << " beta_t=" << params_.beta_t << " alpha_r=" << params_.alpha_r << " beta_r=" << params_.beta_r
                << " rho=" << params_.rho << " (n=" << n << ")";
            throw McmcError(msg.str());
        }
    }

    // Conjugate update for (alpha, beta) with prior N(m0, sa^2) x N+(mb, sb^2)
    // and Gaussian responses of variance v; beta is drawn from its truncated
    // marginal, then alpha | beta.
    void draw_coefficients(double s1, double sx, double sxx, double su, double sxu, double v, double& alpha,
                           double& beta) {
        const double pa = 1.0 / (prior_.intercept_sd * prior_.intercept_sd);
        const double pb = 1.0 / (prior_.slope_sd * prior_.slope_sd);
        const double q11 = pa + s1 / v;
        const double q12 = sx / v;
        const double q22 = pb + sxx / v;
        const double b1 = prior_.intercept_mean * pa + su / v;
        const double b2 = prior_.slope_mean * pb + sxu / v;
        const double det = q11 * q22 - q12 * q12;
        const double v11 = q22 / det;
        const double v12 = -q12 / det;
        const double v22 = q11 / det;
        const double m1 = v11 * b1 + v12 * b2;
        const double m2 = v12 * b1 + v22 * b2;
        beta = sample_signed_normal(m2, std::sqrt(v22), true, rng_);
        const double cond_mean = m1 + v12 / v22 * (beta - m2);
        const double cond_var = std::max(v11 - v12 * v12 / v22, 1e-300);
        std::normal_distribution<double> std_normal(0.0, 1.0);
        alpha = cond_mean + std::sqrt(cond_var) * std_normal(rng_);
    }

    double rho_log_lik(double rho, double s11, double s22, double s12, double n) const {
        const double v = 1.0 - rho * rho;
        return -0.5 * n * std::log(v) - (s11 - 2.0 * rho * s12 + s22) / (2.0 * v);
    }

    void update_rho() {
        double s11 = 0, s22 = 0, s12 = 0;
        const std::size_t n = data_.size();
        for (std::size_t i = 0; i < n; ++i) {
            const double e1 = z_t_[i] - params_.alpha_t - params_.beta_t * x_[i];
            const double e2 = z_r_[i] - params_.alpha_r - params_.beta_r * x_[i];
            s11 += e1 * e1; s22 += e2 * e2; s12 += e1 * e2;
        }
        std::normal_distribution<double> step(0.0, mcmc_.rho_proposal_sd);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        double proposal = params_.rho + step(rng_);
        // Reflect into [0, 1).
        for (int guard = 0; guard < 64 && (proposal < 0.0 || proposal >= 1.0); ++guard)
            proposal = proposal < 0.0 ? -proposal : 2.0 - proposal;
        ++proposals_;
        if (proposal < 0.0 || proposal >= 1.0 - 1e-12) return;
        const double nn = static_cast<double>(n);
        const double log_ratio = rho_log_lik(proposal, s11, s22, s12, nn) - rho_log_lik(params_.rho, s11, s22, s12, nn);
        if (std::log(unif(rng_)) < log_ratio) {
            params_.rho = proposal;
            ++accepted_;
        }
    }

    std::vector<LatentObservation> data_;
    std::vector<double> d_star_;
    EndpointWindows windows_;
    PriorConfig prior_;
    McmcConfig mcmc_;
    std::mt19937_64 rng_;

    std::vector<int> y_t_, y_r_;  // current completed outcomes, -1 when missing
    std::vector<double> z_t_, z_r_, x_;
    std::vector<std::size_t> pending_;
    ProbitParams params_;
    std::size_t proposals_ = 0;
    std::size_t accepted_ = 0;
};

/// Posterior draws given the interim data, with pending outcomes augmented.
inline PosteriorDraws fit_posterior(const std::vector<LatentObservation>& data, const DoseGrid& grid,
                                    const EndpointWindows& windows, const PriorConfig& prior, const McmcConfig& mcmc) {
    mcmc.validate();
    prior.validate();
    std::vector<double> d_star(grid.standardized().begin(), grid.standardized().end());
    ProbitSampler sampler(data, std::move(d_star), windows, prior, mcmc);
    return sampler.run(true);
}

inline PosteriorDraws fit_posterior(const TrialState& s, const EndpointWindows& windows, const PriorConfig& prior,
                                    const McmcConfig& mcmc) {
    return fit_posterior(prepare_observations(s, windows), s.grid, windows, prior, mcmc);
}

/// Observed-data fit that ignores pending outcomes (no imputation).
inline PosteriorDraws fit_observed_only(const std::vector<LatentObservation>& data, const DoseGrid& grid,
                                        const EndpointWindows& windows, const PriorConfig& prior,
                                        const McmcConfig& mcmc) {
    mcmc.validate();
    prior.validate();
    std::vector<double> d_star(grid.standardized().begin(), grid.standardized().end());
    ProbitSampler sampler(data, std::move(d_star), windows, prior, mcmc);
    return sampler.run(false);
}

//---------------------------------------------------------------------------//
// Decision rules
//---------------------------------------------------------------------------//

/// argmin_j |estimates_j - phi| over the allowed doses, ties (to within
/// rounding) to the lower dose.
inline std::optional<std::size_t> closest_to_target(const std::vector<double>& estimates, double phi,
                                                    const std::vector<bool>* excluded = nullptr) {
    std::optional<std::size_t> best;
    for (std::size_t j = 0; j < estimates.size(); ++j) {
        if (excluded && j < excluded->size() && (*excluded)[j]) continue;
        if (!best || std::abs(estimates[j] - phi) < std::abs(estimates[*best] - phi) - 1e-12) best = j;
    }
    return best;
}

inline std::vector<bool> titedc_overdose_verdicts(const PosteriorDraws& draws, const DesignConfig& cfg,
                                                  nlohmann::json* report = nullptr) {
    std::vector<bool> verdicts(draws.levels(), false);
    nlohmann::json probs_t = nlohmann::json::array();
    nlohmann::json probs_r = nlohmann::json::array();
    for (std::size_t j = 0; j < draws.levels(); ++j) {
        const double pt = overdose_prob_titedc(draws, j, Endpoint::dlt, cfg.dlt.target);
        const double pr = overdose_prob_titedc(draws, j, Endpoint::intolerance, cfg.intolerance.target);
        probs_t.push_back(pt);
        probs_r.push_back(pr);
        verdicts[j] = pt > cfg.elimination_cutoff || pr > cfg.elimination_cutoff;
    }
    if (report) *report = {{"dlt", probs_t}, {"intolerance", probs_r}};
    return verdicts;
}

/// Interim dose assignment: j* is the lower of the doses whose posterior
/// mean rates are closest to each target; move one level toward it.
inline Decision decide_titedc(const TrialState& state, const PosteriorDraws& draws, const DesignConfig& cfg) {
    const std::size_t levels = state.levels();
    const std::size_t jc = state.current_level;
    Decision d;

    nlohmann::json overdose;
    const auto verdicts = titedc_overdose_verdicts(draws, cfg, &overdose);
    d.eliminated = apply_elimination(state, verdicts).eliminated;

    const auto pi_t = draws.pi_hat(Endpoint::dlt);
    const auto pi_r = draws.pi_hat(Endpoint::intolerance);
    const std::size_t jt = *closest_to_target(pi_t, cfg.dlt.target);
    const std::size_t jr = *closest_to_target(pi_r, cfg.intolerance.target);
    const std::size_t target = std::min(jt, jr);

    std::vector<double> se_t(levels), se_r(levels);
    for (std::size_t j = 0; j < levels; ++j) {
        se_t[j] = draws.pi_hat_se(Endpoint::dlt, j);
        se_r[j] = draws.pi_hat_se(Endpoint::intolerance, j);
    }

    auto [action, next] = move_toward(jc, target, d.eliminated);
    d.action = action;
    d.next_level = next;
    d.rationale = {{"design", std::string(to_string(cfg.kind))},
                   {"rule", "closest-to-target"},
                   {"current_level", jc + 1},
                   {"estimates", {{"dlt", {{"pi_hat", pi_t}, {"mc_se", se_t}, {"closest", jt + 1}}},
                                  {"intolerance", {{"pi_hat", pi_r}, {"mc_se", se_r}, {"closest", jr + 1}}}}},
                   {"target_level", target + 1},
                   {"binding_endpoint", jt <= jr ? "dlt" : "intolerance"},
                   {"overdose_probability", overdose},
                   {"draws", draws.draws.size()},
                   {"rho_acceptance", draws.rho_acceptance}};
    return d;
}

/// Final MTD: j* over non-eliminated doses, or none if all are eliminated.
inline std::optional<std::size_t> select_mtd_titedc(const PosteriorDraws& draws, const DesignConfig& cfg,
                                                    const std::vector<bool>& eliminated) {
    const auto jt = closest_to_target(draws.pi_hat(Endpoint::dlt), cfg.dlt.target, &eliminated);
    const auto jr = closest_to_target(draws.pi_hat(Endpoint::intolerance), cfg.intolerance.target, &eliminated);
    if (!jt || !jr) return std::nullopt;
    return std::min(*jt, *jr);
}

}  // namespace dualdose
