# -*- coding: utf-8 -*-
from setuptools import setup

packages = \
['tierquant',
 'tierquant.analyzer',
 'tierquant.model',
 'tierquant.search']

package_data = \
{'': ['*'], 'tierquant': ['fixtures/*']}

install_requires = \
['click>=8.0',
 'networkx>=2.5',
 'numpy>=1.21',
 'torch>=1.10']

entry_points = \
{'console_scripts': ['tierquant = tierquant.cli:tierquant']}

setup_kwargs = {
    'name': 'tierquant',
    'version': '0.1.0',
    'description': 'Post-training quantization search for spiking RWKV-style language models: block sensitivity analysis and tiered global/block/module precision search under accuracy and memory budgets.',
    'long_description': None,
    'author': 'tierquant developers',
    'author_email': None,
    'maintainer': None,
    'maintainer_email': None,
    'url': None,
    'packages': packages,
    'package_data': package_data,
    'install_requires': install_requires,
    'entry_points': entry_points,
    'python_requires': '>=3.8,<4.0',
}


setup(**setup_kwargs)

# This setup.py was autogenerated using poetry.
