import os


if os.environ.get('TEST_MODE', '').lower() in ('1', 'true'):
    THREADS = 1
    LOG_LEVEL = 'DEBUG'
else:
    THREADS = int(os.environ.get('COVTHRESH_THREADS', '1'))
    LOG_LEVEL = os.environ.get('COVTHRESH_LOG_LEVEL', 'WARNING').upper()

KKT_TOL = float(os.environ.get('COVTHRESH_KKT_TOL', '1e-7'))
CONV_TOL = float(os.environ.get('COVTHRESH_CONV_TOL', '1e-6'))
SUPPORT_TOL = float(os.environ.get('COVTHRESH_SUPPORT_TOL', '1e-8'))
MAX_OUTER = int(os.environ.get('COVTHRESH_MAX_OUTER', '1000'))
MAX_INNER = int(os.environ.get('COVTHRESH_MAX_INNER', '1000'))
