"""Test suite for the CSG pipeline."""
