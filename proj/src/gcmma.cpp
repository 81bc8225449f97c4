#include "foam/gcmma.hpp"

#include <Eigen/Dense>

#include <iostream>

namespace foam {

namespace {

VecX cwise_max(const VecX& a, double s) { return a.cwiseMax(VecX::Constant(a.size(), s)); }

} // namespace

GCMMA::GCMMA(int n, int m, VecX xmin, VecX xmax, Options opt)
    : n_(n), m_(std::max(m, 1)), xmin_(std::move(xmin)), xmax_(std::move(xmax)), opt_(opt) {
    if (xmin_.size() != n_ || xmax_.size() != n_) throw Error("gcmma: bound size mismatch");
    if ((xmax_ - xmin_).minCoeff() < 0) throw Error("gcmma: xmin > xmax");
    low_ = xmin_;
    upp_ = xmax_;
    xold1_ = VecX::Zero(n_);
    xold2_ = VecX::Zero(n_);
    epsimin_ = 1e-9 * std::sqrt(static_cast<double>(m_ + n_));
}

VecX GCMMA::step(const VecX& x, double f0val, const VecX& df0dx, const VecX& fval_in,
                 const MatX& dfdx_in, const TrialEval& trial_eval) {
    if (!df0dx.allFinite()) throw Error("gcmma: non-finite objective gradient");
    ++outeriter_;

    // Pad a never-active dummy constraint when the caller has none.
    VecX fval = fval_in;
    MatX dfdx = dfdx_in;
    if (fval.size() < m_) {
        fval = VecX::Constant(m_, -1.0);
        dfdx = MatX::Zero(m_, n_);
        fval.head(fval_in.size()) = fval_in;
        if (dfdx_in.size() > 0) dfdx.topRows(dfdx_in.rows()) = dfdx_in;
    }
    if (!dfdx.allFinite()) throw Error("gcmma: non-finite constraint gradient");

    VecX xmami = cwise_max(xmax_ - xmin_, 1e-5);

    double raa0 = std::max(opt_.raa0eps, 0.1 / n_ * df0dx.cwiseAbs().dot(xmami));
    VecX raa = cwise_max(0.1 / n_ * (dfdx.cwiseAbs() * xmami), opt_.raaeps);

    if (outeriter_ < 3) {
        low_ = x - opt_.asyinit * xmami;
        upp_ = x + opt_.asyinit * xmami;
    } else {
        VecX xxx = (x - xold1_).cwiseProduct(xold1_ - xold2_);
        for (int j = 0; j < n_; ++j) {
            double factor = xxx[j] > 0 ? opt_.asyincr : (xxx[j] < 0 ? opt_.asydecr : 1.0);
            low_[j] = x[j] - factor * (xold1_[j] - low_[j]);
            upp_[j] = x[j] + factor * (upp_[j] - xold1_[j]);
        }
        low_ = low_.cwiseMax(x - 10.0 * xmami).cwiseMin(x - 0.01 * xmami);
        upp_ = upp_.cwiseMin(x + 10.0 * xmami).cwiseMax(x + 0.01 * xmami);
    }

    SubResult sub;
    last_inner_ = 0;
    last_conservative_ = false;
    while (true) {
        sub = subproblem(x, f0val, df0dx, fval, dfdx, raa0, raa);
        double f0new = 0;
        VecX fnew;
        trial_eval(sub.x, f0new, fnew);
        if (fnew.size() < m_) {
            VecX padded = VecX::Constant(m_, -1.0);
            padded.head(fnew.size()) = fnew;
            fnew = padded;
        }
        bool conserv = sub.f0app + epsimin_ >= f0new &&
                       ((sub.fapp.array() + epsimin_) >= fnew.array()).all();
        if (conserv) {
            last_conservative_ = true;
            break;
        }
        if (last_inner_ >= opt_.max_inner) break;
        ++last_inner_;

        // raaupdate: stiffen the approximations that were non-conservative.
        VecX ux1 = upp_ - sub.x, xl1 = sub.x - low_;
        VecX xp = sub.x - x;
        double raacof = 0;
        for (int j = 0; j < n_; ++j)
            raacof += xp[j] * xp[j] * (upp_[j] - low_[j]) / (ux1[j] * xl1[j] * xmami[j]);
        raacof = std::max(raacof, 1e-12);
        if (f0new > sub.f0app + 0.5 * epsimin_)
            raa0 = std::min(1.1 * (raa0 + (f0new - sub.f0app) / raacof), 10.0 * raa0);
        for (int i = 0; i < m_; ++i)
            if (fnew[i] > sub.fapp[i] + 0.5 * epsimin_)
                raa[i] = std::min(1.1 * (raa[i] + (fnew[i] - sub.fapp[i]) / raacof),
                                  10.0 * raa[i]);
    }

    xold2_ = xold1_;
    xold1_ = x;
    return sub.x;
}

GCMMA::SubResult GCMMA::subproblem(const VecX& xval, double f0val, const VecX& df0dx,
                                   const VecX& fval, const MatX& dfdx, double raa0,
                                   const VecX& raa) const {
    VecX xmami = cwise_max(xmax_ - xmin_, 1e-5);
    VecX xmamiinv = xmami.cwiseInverse();

    VecX alfa = (low_ + opt_.albefa * (xval - low_))
                    .cwiseMax(xval - opt_.move * xmami)
                    .cwiseMax(xmin_);
    VecX beta = (upp_ - opt_.albefa * (upp_ - xval))
                    .cwiseMin(xval + opt_.move * xmami)
                    .cwiseMin(xmax_);

    VecX ux1 = upp_ - xval, xl1 = xval - low_;
    VecX ux2 = ux1.cwiseProduct(ux1), xl2 = xl1.cwiseProduct(xl1);
    VecX uxinv = ux1.cwiseInverse(), xlinv = xl1.cwiseInverse();

    VecX p0 = df0dx.cwiseMax(0.0), q0 = (-df0dx).cwiseMax(0.0);
    VecX pq0 = 0.001 * (p0 + q0) + raa0 * xmamiinv;
    p0 = (p0 + pq0).cwiseProduct(ux2);
    q0 = (q0 + pq0).cwiseProduct(xl2);
    double r0 = f0val - p0.dot(uxinv) - q0.dot(xlinv);

    MatX P = dfdx.cwiseMax(0.0), Q = (-dfdx).cwiseMax(0.0);
    MatX PQ = 0.001 * (P + Q) + raa * xmamiinv.transpose();
    P = (P + PQ) * ux2.asDiagonal();
    Q = (Q + PQ) * xl2.asDiagonal();
    VecX b = -(fval - P * uxinv - Q * xlinv);

    SubResult res;
    res.x = subsolv(alfa, beta, p0, q0, P, Q, b);
    VecX uxn = (upp_ - res.x).cwiseInverse(), xln = (res.x - low_).cwiseInverse();
    res.f0app = r0 + p0.dot(uxn) + q0.dot(xln);
    res.fapp = (P * uxn + Q * xln) - b;
    return res;
}

VecX GCMMA::subsolv(const VecX& alfa, const VecX& beta, const VecX& p0, const VecX& q0,
                    const MatX& P, const MatX& Q, const VecX& b) const {
    int n = n_, m = m_;
    VecX een = VecX::Ones(n), eem = VecX::Ones(m);
    VecX a = VecX::Zero(m), c = VecX::Constant(m, 1000.0), d = VecX::Ones(m);
    double a0 = 1.0;

    double epsi = 1.0;
    VecX x = 0.5 * (alfa + beta);
    VecX y = eem;
    double z = 1.0;
    VecX lam = eem;
    VecX xsi = cwise_max((x - alfa).cwiseInverse(), 1.0);
    VecX eta = cwise_max((beta - x).cwiseInverse(), 1.0);
    VecX mu = (0.5 * c).cwiseMax(1.0);
    double zet = 1.0;
    VecX s = eem;

    auto residuals = [&](VecX& res1, VecX& res2) {
        VecX ux1 = upp_ - x, xl1 = x - low_;
        VecX ux2 = ux1.cwiseProduct(ux1), xl2 = xl1.cwiseProduct(xl1);
        VecX plam = p0 + P.transpose() * lam, qlam = q0 + Q.transpose() * lam;
        VecX gvec = P * ux1.cwiseInverse() + Q * xl1.cwiseInverse();
        VecX dpsidx = plam.cwiseQuotient(ux2) - qlam.cwiseQuotient(xl2);

        res1.resize(n + m + 1);
        res1.head(n) = dpsidx - xsi + eta;
        res1.segment(n, m) = c + d.cwiseProduct(y) - mu - lam;
        res1[n + m] = a0 - zet - a.dot(lam);

        res2.resize(3 * m + 2 * n + 1);
        res2.head(m) = gvec - a * z - y + s - b;
        res2.segment(m, n) = xsi.cwiseProduct(x - alfa) - VecX::Constant(n, epsi);
        res2.segment(m + n, n) = eta.cwiseProduct(beta - x) - VecX::Constant(n, epsi);
        res2.segment(m + 2 * n, m) = mu.cwiseProduct(y) - VecX::Constant(m, epsi);
        res2[2 * m + 2 * n] = zet * z - epsi;
        res2.segment(2 * m + 2 * n + 1, m) = lam.cwiseProduct(s) - VecX::Constant(m, epsi);
    };

    VecX res1, res2;
    while (epsi > epsimin_) {
        residuals(res1, res2);
        double residunorm = std::sqrt(res1.squaredNorm() + res2.squaredNorm());
        double residumax = std::max(res1.cwiseAbs().maxCoeff(), res2.cwiseAbs().maxCoeff());

        int ittt = 0;
        while (residumax > 0.9 * epsi && ittt < 200) {
            ++ittt;
            VecX ux1 = upp_ - x, xl1 = x - low_;
            VecX ux2 = ux1.cwiseProduct(ux1), xl2 = xl1.cwiseProduct(xl1);
            VecX ux3 = ux1.cwiseProduct(ux2), xl3 = xl1.cwiseProduct(xl2);
            VecX uxinv2 = ux2.cwiseInverse(), xlinv2 = xl2.cwiseInverse();
            VecX plam = p0 + P.transpose() * lam, qlam = q0 + Q.transpose() * lam;
            VecX gvec = P * ux1.cwiseInverse() + Q * xl1.cwiseInverse();
            MatX GG = P * uxinv2.asDiagonal() - Q * xlinv2.asDiagonal();
            VecX dpsidx = plam.cwiseQuotient(ux2) - qlam.cwiseQuotient(xl2);

            VecX delx = dpsidx - epsi * (x - alfa).cwiseInverse() +
                        epsi * (beta - x).cwiseInverse();
            VecX dely = c + d.cwiseProduct(y) - lam - epsi * y.cwiseInverse();
            double delz = a0 - a.dot(lam) - epsi / z;
            VecX dellam = gvec - a * z - y - b + epsi * lam.cwiseInverse();

            VecX diagx = 2.0 * (plam.cwiseQuotient(ux3) + qlam.cwiseQuotient(xl3)) +
                         xsi.cwiseQuotient(x - alfa) + eta.cwiseQuotient(beta - x);
            VecX diagy = d + mu.cwiseQuotient(y);
            VecX diaglamyi = s.cwiseQuotient(lam) + diagy.cwiseInverse();

            VecX dx(n), dlam(m);
            double dz;
            // m << n here, so eliminate x and solve the (m+1) system.
            VecX blam = dellam + dely.cwiseQuotient(diagy) - GG * delx.cwiseQuotient(diagx);
            MatX Alam = MatX(diaglamyi.asDiagonal()) +
                        GG * diagx.cwiseInverse().asDiagonal() * GG.transpose();
            MatX AA(m + 1, m + 1);
            AA.topLeftCorner(m, m) = Alam;
            AA.topRightCorner(m, 1) = a;
            AA.bottomLeftCorner(1, m) = a.transpose();
            AA(m, m) = -zet / z;
            VecX bb(m + 1);
            bb.head(m) = blam;
            bb[m] = delz;
            VecX solut = AA.fullPivLu().solve(bb);
            dlam = solut.head(m);
            dz = solut[m];
            dx = -(delx + GG.transpose() * dlam).cwiseQuotient(diagx);

            VecX dy = (dlam - dely).cwiseQuotient(diagy);
            VecX dxsi = -xsi + (epsi * een - xsi.cwiseProduct(dx)).cwiseQuotient(x - alfa);
            VecX deta = -eta + (epsi * een + eta.cwiseProduct(dx)).cwiseQuotient(beta - x);
            VecX dmu = -mu + (epsi * eem - mu.cwiseProduct(dy)).cwiseQuotient(y);
            double dzet = -zet + (epsi - zet * dz) / z;
            VecX ds = -s + (epsi * eem - s.cwiseProduct(dlam)).cwiseQuotient(lam);

            double stminv = 1.0;
            auto ratio = [&stminv](double dv, double v) {
                stminv = std::max(stminv, -1.01 * dv / v);
            };
            for (int i = 0; i < m; ++i) {
                ratio(dy[i], y[i]);
                ratio(dlam[i], lam[i]);
                ratio(dmu[i], mu[i]);
                ratio(ds[i], s[i]);
            }
            ratio(dz, z);
            ratio(dzet, zet);
            for (int j = 0; j < n; ++j) {
                ratio(dxsi[j], xsi[j]);
                ratio(deta[j], eta[j]);
                ratio(dx[j], x[j] - alfa[j]);
                ratio(-dx[j], beta[j] - x[j]);
            }
            double steg = 1.0 / stminv;

            VecX xo = x, yo = y, lamo = lam, xsio = xsi, etao = eta, muo = mu, so = s;
            double zo = z, zeto = zet;
            double resinew = 2.0 * residunorm;
            int itto = 0;
            while (resinew > residunorm && itto < 50) {
                ++itto;
                x = xo + steg * dx;
                y = yo + steg * dy;
                z = zo + steg * dz;
                lam = lamo + steg * dlam;
                xsi = xsio + steg * dxsi;
                eta = etao + steg * deta;
                mu = muo + steg * dmu;
                zet = zeto + steg * dzet;
                s = so + steg * ds;
                residuals(res1, res2);
                resinew = std::sqrt(res1.squaredNorm() + res2.squaredNorm());
                steg /= 2.0;
            }
            residunorm = resinew;
            residumax = std::max(res1.cwiseAbs().maxCoeff(), res2.cwiseAbs().maxCoeff());
        }
        epsi *= 0.1;
    }
    return x;
}

void GCMMA::save(std::ostream& os) const {
    os.precision(17);
    os << n_ << " " << m_ << " " << outeriter_ << "\n";
    for (const VecX* v : {&xold1_, &xold2_, &low_, &upp_}) {
        for (int j = 0; j < n_; ++j) os << (*v)[j] << " ";
        os << "\n";
    }
}

void GCMMA::load(std::istream& is) {
    int n = 0, m = 0;
    is >> n >> m >> outeriter_;
    if (n != n_ || m != m_) throw Error("gcmma: checkpoint size mismatch");
    for (VecX* v : {&xold1_, &xold2_, &low_, &upp_})
        for (int j = 0; j < n_; ++j) is >> (*v)[j];
    if (!is) throw Error("gcmma: malformed checkpoint state");
}

} // namespace foam
