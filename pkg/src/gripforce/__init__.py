"""Grasp force control: gripper contact simulation, MDP, PPO agent and evaluation harness."""

__version__ = "0.1.0"
