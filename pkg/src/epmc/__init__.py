"""Pattern-aware parametric model checking of Markov chains."""
