"""Regenerate the bundled benchmark files under src/flora/data/."""

from flora.benchmarks import write_designs

if __name__ == "__main__":
    write_designs()
