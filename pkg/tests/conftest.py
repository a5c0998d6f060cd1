# -*- coding: utf-8 -*-
"""
    Shared fixtures for the ampse tests.
"""
import pytest
import yaml

from ampse.ensemble import CouplingMatrix, EnsembleSpec
from ampse.priors import Prior


@pytest.fixture
def gaussian_prior():
    return Prior.gaussian(0.0, 1.0)


@pytest.fixture
def bg_prior():
    return Prior.bernoulli_gaussian(0.1)


@pytest.fixture
def two_point_prior():
    return Prior(atoms=[(-1.0, 0.5), (1.0, 0.5)])


@pytest.fixture
def three_point_prior():
    return Prior(atoms=[(-1.0, 0.05), (0.0, 0.9), (1.0, 0.05)])


@pytest.fixture
def small_coupling():
    return CouplingMatrix([[0.7, 0.3], [0.3, 0.7]])


@pytest.fixture
def small_spec(small_coupling):
    return EnsembleSpec(small_coupling, 10, 20)


@pytest.fixture
def write_config(tmp_path):
    """ Write a config mapping to a YAML file under tmp_path, output included. """
    def write(data, name='experiment'):
        data = dict(data)
        data.setdefault('output', str(tmp_path / (name + '.csv')))
        path = tmp_path / (name + '.yaml')
        path.write_text(yaml.safe_dump(data), encoding='utf-8')
        return path
    return write
