"""Random beta-expansions and their invariant densities."""
