# Agents: inverse algorithms with certificates, Monte Carlo experiments
