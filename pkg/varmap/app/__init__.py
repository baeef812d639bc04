"""Taylor transfer maps of the driven Duffing oscillator."""
