from setuptools import setup, find_packages


def scm_version():
    def local_scheme(version):
        if version.tag and not version.distance:
            return version.format_with("")
        else:
            return version.format_choice("+{node}", "+{node}.dirty")
    return {
        "relative_to": __file__,
        "version_scheme": "guess-next-dev",
        "local_scheme": local_scheme
    }


setup(
    name="gptcm",
    use_scm_version=scm_version(),
    description="Promotion time cure models with several cell clusters, and Poisson systems",
    license="BSD",
    python_requires="~=3.8",
    setup_requires=["setuptools_scm"],
    install_requires=[
        "setuptools",
        "numpy>=1.17", # for Generator and SeedSequence
        "scipy>=1.4",
        "pandas>=1.5", # for to_csv(lineterminator=)
        "Jinja2", # for gptcm.study tables
    ],
    extras_require={
        "tests": ["mpmath"],
    },
    packages=find_packages(),
    package_data={
        "gptcm": ["configs/*.json"],
    },
    entry_points={
        "console_scripts": [
            "gptcm = gptcm.cli:main",
        ]
    },
)
