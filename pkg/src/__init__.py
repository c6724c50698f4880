"""Attention-guided diffusion super-resolution - Main package"""
