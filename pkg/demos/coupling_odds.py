"""How often does an innocent node share every affected set with the target?

Prints the coupling probability table for a few network sizes, then checks
one entry by enumerating all subsets.  The chance rises with the size of the
affected set but never exceeds one half.

    python demos/coupling_odds.py
"""
from crossfire_te.lemma import coupling_probability, coupling_probability_bruteforce, table

for n in (4, 8, 16):
    rows = table(n)
    print(f"n = {n}: " + "  ".join(f"p{r.k}={float(r.p_k):.3f}" for r in rows[: min(n, 8)]))

n, k = 10, 4
fast = coupling_probability(n, k).p_k
slow = coupling_probability_bruteforce(n, k)
print(f"\nn={n}, k={k}: closed form {fast}, enumeration {slow}, equal: {fast == slow}")
