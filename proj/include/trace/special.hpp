#pragma once

namespace trace {

// Regularized incomplete beta I_x(a, b), continued-fraction evaluation
// (Lentz's method). Accurate to ~1e-14 for the a, b ranges used here.
double incomplete_beta(double a, double b, double x);

// Two-sided normal tail probability for a Wald z statistic.
double normal_two_sided_p(double z);

// Two-sided Student-t tail probability with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

// Upper tail P(F > f) for an F statistic with (df1, df2) degrees of freedom.
double f_survival(double f, double df1, double df2);

}  // namespace trace
