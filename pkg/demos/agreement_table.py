"""Print the immune tally ranges for F = 1..3 and cross-check them by enumeration."""
from kerikernel.agreement import immune_split_check, immunity_table

for F in (1, 2, 3):
    print(f"F={F}")
    print("   N  3F+1  lower  N-F  immune M")
    for row in immunity_table(F):
        if row.N <= 12:  # enumeration grows as 3**N
            brute = [M for M in range(1, row.N - F + 1) if immune_split_check(row.N, F, M)]
            assert tuple(brute) == row.tallies
        print(f"  {row.N:2d}  {row.three_f_plus_one:4d}  {row.lower:5d}  {row.upper:3d}  {list(row.tallies)}")
