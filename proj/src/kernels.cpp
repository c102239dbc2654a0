#include "emovid/kernels.hpp"

namespace emovid::kernels {

void gemm(const double* a, const double* b, double* y, int m, int k, int n,
          bool transpose_a, bool transpose_b, bool accumulate) {
    // Each y(i,j) is produced by exactly one iteration and its k-sum runs in
    // a fixed order, so the result does not depend on the thread count.
#pragma omp parallel for if (static_cast<long>(m) * n * k > 16384)
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const double av = transpose_a ? a[p * m + i] : a[i * k + p];
                const double bv = transpose_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            if (accumulate)
                y[i * n + j] += acc;
            else
                y[i * n + j] = acc;
        }
    }
}

void conv2d_forward(const Conv2dShape& s, const double* x, const double* w, double* y) {
    const int cg_in = s.cin / s.groups;
    const int cg_out = s.cout / s.groups;
    const int oh = s.oh(), ow = s.ow();
#pragma omp parallel for collapse(2) if (static_cast<long>(s.cout) * oh * ow > 512)
    for (int co = 0; co < s.cout; ++co) {
        for (int oy = 0; oy < oh; ++oy) {
            const int g = co / cg_out;
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int ci = 0; ci < cg_in; ++ci) {
                    const int c = g * cg_in + ci;
                    for (int ky = 0; ky < s.kh; ++ky) {
                        const int iy = oy * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= s.h)
                            continue;
                        for (int kx = 0; kx < s.kw; ++kx) {
                            const int ix = ox * s.stride - s.pad + kx;
                            if (ix < 0 || ix >= s.w)
                                continue;
                            acc += x[(c * s.h + iy) * s.w + ix] *
                                   w[((co * cg_in + ci) * s.kh + ky) * s.kw + kx];
                        }
                    }
                }
                y[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

void conv2d_grad_input(const Conv2dShape& s, const double* gy, const double* w, double* gx) {
    const int cg_in = s.cin / s.groups;
    const int cg_out = s.cout / s.groups;
    const int oh = s.oh(), ow = s.ow();
    // Gather form: every input element sums its own contributions, so the
    // parallel loop has no write conflicts.
#pragma omp parallel for collapse(2) if (static_cast<long>(s.cin) * s.h * s.w > 512)
    for (int c = 0; c < s.cin; ++c) {
        for (int iy = 0; iy < s.h; ++iy) {
            const int g = c / cg_in;
            const int ci = c % cg_in;
            for (int ix = 0; ix < s.w; ++ix) {
                double acc = 0.0;
                for (int co = g * cg_out; co < (g + 1) * cg_out; ++co) {
                    for (int ky = 0; ky < s.kh; ++ky) {
                        const int ny = iy + s.pad - ky;
                        if (ny < 0 || ny % s.stride != 0)
                            continue;
                        const int oy = ny / s.stride;
                        if (oy >= oh)
                            continue;
                        for (int kx = 0; kx < s.kw; ++kx) {
                            const int nx = ix + s.pad - kx;
                            if (nx < 0 || nx % s.stride != 0)
                                continue;
                            const int ox = nx / s.stride;
                            if (ox >= ow)
                                continue;
                            acc += gy[(co * oh + oy) * ow + ox] *
                                   w[((co * cg_in + ci) * s.kh + ky) * s.kw + kx];
                        }
                    }
                }
                gx[(c * s.h + iy) * s.w + ix] += acc;
            }
        }
    }
}

void conv2d_grad_weight(const Conv2dShape& s, const double* gy, const double* x, double* gw) {
    const int cg_in = s.cin / s.groups;
    const int cg_out = s.cout / s.groups;
    const int oh = s.oh(), ow = s.ow();
#pragma omp parallel for collapse(2) if (static_cast<long>(s.cout) * cg_in * s.kh * s.kw > 256)
    for (int co = 0; co < s.cout; ++co) {
        for (int ci = 0; ci < cg_in; ++ci) {
            const int g = co / cg_out;
            const int c = g * cg_in + ci;
            for (int ky = 0; ky < s.kh; ++ky) {
                for (int kx = 0; kx < s.kw; ++kx) {
                    double acc = 0.0;
                    for (int oy = 0; oy < oh; ++oy) {
                        const int iy = oy * s.stride - s.pad + ky;
                        if (iy < 0 || iy >= s.h)
                            continue;
                        for (int ox = 0; ox < ow; ++ox) {
                            const int ix = ox * s.stride - s.pad + kx;
                            if (ix < 0 || ix >= s.w)
                                continue;
                            acc += gy[(co * oh + oy) * ow + ox] * x[(c * s.h + iy) * s.w + ix];
                        }
                    }
                    gw[((co * cg_in + ci) * s.kh + ky) * s.kw + kx] += acc;
                }
            }
        }
    }
}

namespace serial {

void gemm(const double* a, const double* b, double* y, int m, int k, int n,
          bool transpose_a, bool transpose_b, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
                const double av = transpose_a ? a[p * m + i] : a[i * k + p];
                const double bv = transpose_b ? b[j * k + p] : b[p * n + j];
                acc += av * bv;
            }
            if (accumulate)
                y[i * n + j] += acc;
            else
                y[i * n + j] = acc;
        }
    }
}

void conv2d_forward(const Conv2dShape& s, const double* x, const double* w, double* y) {
    const int cg_in = s.cin / s.groups;
    const int cg_out = s.cout / s.groups;
    const int oh = s.oh(), ow = s.ow();
    for (int co = 0; co < s.cout; ++co) {
        const int g = co / cg_out;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                double acc = 0.0;
                for (int ci = 0; ci < cg_in; ++ci) {
                    for (int ky = 0; ky < s.kh; ++ky) {
                        for (int kx = 0; kx < s.kw; ++kx) {
                            const int iy = oy * s.stride - s.pad + ky;
                            const int ix = ox * s.stride - s.pad + kx;
                            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w)
                                continue;
                            acc += x[((g * cg_in + ci) * s.h + iy) * s.w + ix] *
                                   w[((co * cg_in + ci) * s.kh + ky) * s.kw + kx];
                        }
                    }
                }
                y[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
}

// The serial gradients are the forward loops differentiated in place
// (scatter form), deliberately structured unlike the gather kernels above.
void conv2d_grad_input(const Conv2dShape& s, const double* gy, const double* w, double* gx) {
    const int cg_in = s.cin / s.groups;
    const int cg_out = s.cout / s.groups;
    const int oh = s.oh(), ow = s.ow();
    for (int co = 0; co < s.cout; ++co) {
        const int g = co / cg_out;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double gout = gy[(co * oh + oy) * ow + ox];
                for (int ci = 0; ci < cg_in; ++ci) {
                    for (int ky = 0; ky < s.kh; ++ky) {
                        for (int kx = 0; kx < s.kw; ++kx) {
                            const int iy = oy * s.stride - s.pad + ky;
                            const int ix = ox * s.stride - s.pad + kx;
                            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w)
                                continue;
                            gx[((g * cg_in + ci) * s.h + iy) * s.w + ix] +=
                                gout * w[((co * cg_in + ci) * s.kh + ky) * s.kw + kx];
                        }
                    }
                }
            }
        }
    }
}

void conv2d_grad_weight(const Conv2dShape& s, const double* gy, const double* x, double* gw) {
    const int cg_in = s.cin / s.groups;
    const int cg_out = s.cout / s.groups;
    const int oh = s.oh(), ow = s.ow();
    for (int co = 0; co < s.cout; ++co) {
        const int g = co / cg_out;
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const double gout = gy[(co * oh + oy) * ow + ox];
                for (int ci = 0; ci < cg_in; ++ci) {
                    for (int ky = 0; ky < s.kh; ++ky) {
                        for (int kx = 0; kx < s.kw; ++kx) {
                            const int iy = oy * s.stride - s.pad + ky;
                            const int ix = ox * s.stride - s.pad + kx;
                            if (iy < 0 || iy >= s.h || ix < 0 || ix >= s.w)
                                continue;
                            gw[((co * cg_in + ci) * s.kh + ky) * s.kw + kx] +=
                                gout * x[((g * cg_in + ci) * s.h + iy) * s.w + ix];
                        }
                    }
                }
            }
        }
    }
}

} // namespace serial

} // namespace emovid::kernels
