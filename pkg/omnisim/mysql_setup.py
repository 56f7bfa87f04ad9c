# Django expects mysqlclient; PyMySQL stands in for it when DATABASE_URL is mysql://
import pymysql

pymysql.version_info = (1, 4, 3, "final", 0)
pymysql.install_as_MySQLdb()
