"""gamma, delta, beta and the tilted exit rates over one year.

The tilted chain leaves the risky regime a little faster near maturity; the
uniformization rate must dominate these exit rates on the whole horizon.
"""

from rsgbm import AuxFunctions, load_model

for name, T in (("shen", 1.0), ("apple", 20 / 252)):
    aux = AuxFunctions(load_model(name), T)
    tab = aux.table(T, 5)
    print(name)
    for k in range(len(tab["t"])):
        print("  " + "  ".join(f"{c}={tab[c][k]:.5f}" for c in tab))
    for kind in ("tilde", "arrow"):
        b = aux.uniformization_bound(aux.generator(kind), T)
        print(f"  {kind:5s} sup exit rate {b.sup:.4f}  lambda {b.lam:.4f}")
