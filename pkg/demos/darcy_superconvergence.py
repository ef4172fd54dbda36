"""Darcy benchmark: viscosity-robust convergence and pressure
superconvergence.

With mu = 0 and sigma = 1 only the normal velocity component can be
constrained; the tangential weak terms vanish identically at mu = 0, so
the formulation passes to the Darcy limit without modification. The
discrete pressure superconverges to the elementwise mean of the exact
pressure. The same exact fields are then re-solved for small positive
viscosities to show the error barely moves.
"""

from mce.bench import case_darcy, error_norms, run_convergence, solve_case

LEVELS = [4, 8, 16, 32]

record = run_convergence(case_darcy(), LEVELS)
print(f"{'n':>4} {'h':>9} {'L2(u)':>12} {'L2(p)':>12} {'|pi0 p - ph|':>13}")
for row in record.rows:
    print(
        f"{row['n']:>4} {row['h']:>9.5f} {row['err_l2_u']:>12.4e} "
        f"{row['err_l2_p']:>12.4e} {row['err_p0p']:>13.4e}"
    )
print("\nfitted slopes:")
for name, slope in sorted(record.slopes.items()):
    print(f"  {name:>14} = {slope:6.3f}")
print("\nNote: both the velocity and the projected-pressure errors decay")
print("faster than the a-priori bounds require on this uniform mesh (the")
print("velocity space is rich enough for second-order flux accuracy).")

print("\nviscosity sweep at n = 8 (same exact solution for every mu):")
for mu in (0.0, 1e-6, 1e-3):
    sol, _, _, _ = solve_case(case_darcy(mu), 8)
    err = error_norms(sol, case_darcy(mu))
    print(f"  mu = {mu:8.0e}: L2 velocity error = {err.l2_u:.8e}")

record.to_csv("darcy_convergence.csv")
print("\nwrote darcy_convergence.csv")
