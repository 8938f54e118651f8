"""Baseline run: optimise, rebuild the two-level law, check the co-state.

Run with ``python demos/baseline.py``; takes about 15 s.
"""

from fracchemostat.experiments import RunConfig, pmp_check, residual_check, run_pipeline
from fracchemostat.model import s_bar


def main():
    cfg = RunConfig()
    res = run_pipeline(cfg)
    rep = res.predicted.report
    print(f"steady state       s_bar = {s_bar(cfg.params):.4f}")
    print(f"predicted (N={cfg.N})  s_av  = {rep.objective:.4f}  (KKT {rep.kkt_residual:.1e})")
    print(f"corrected (M={cfg.M})  s_av  = {res.s_av:.4f}  ({res.improvement_pct:.2f}% lower)")
    print("switch times       " + ", ".join(f"{x:.4f} h" for x in res.switch_times))

    rs, rx = residual_check(res)
    print(f"2D residuals       s {rs:.1e}, x {rx:.1e}")
    for conv, d in pmp_check(res).items():
        print(f"co-state [{conv:7s}] residual {d['linear_residual']:.1e}, "
              f"sign consistency {d['consistency']:.3f}, "
              f"with duty-cycle shift {d['consistency_with_eta']:.3f}")


if __name__ == "__main__":
    main()
