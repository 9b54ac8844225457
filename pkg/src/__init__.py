"""Hybrid AC/DC microgrid FCS-MPC simulator."""
