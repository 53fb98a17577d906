"""relic-desk: desk-scale ReLICv2 pretraining engine."""
